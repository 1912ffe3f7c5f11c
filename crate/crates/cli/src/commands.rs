use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;
use std::time::Instant;

use evtpr_core::dataset::{plan_windows, write_manifest};
use evtpr_core::event_model::{reconstruct_log_intensity, simulate_events, Polarity};
use evtpr_core::io::{
    encode_events, encode_frame, events_from_csv, events_to_csv, frame_from_hwc, load_named_tensors, read_events,
    read_frame, save_named_tensors, write_tensor,
};
use evtpr_core::kernels::{pipeline_forward, PipelineConfig, PipelineParams};
use evtpr_core::metrics::{evaluate, ChannelMode};
use evtpr_core::representations::{build_tpr, build_voxel_grid, parse_rational, tpr_granularity};
use evtpr_core::{Event, EventStream, Tensor};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::support::{
    list_pixmaps, parse_seconds, parse_time_list, read_clip, read_timestamps, seconds_to_micros,
    seconds_to_micros_f64, usage, CliResult, TIMESTAMPS_FILE,
};
use crate::{
    BenchArgs, MetricsArgs, PipelineArgs, PlanArgs, ReconstructArgs, Repr, SimulateArgs, TprArgs, VoxelizeArgs,
};

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "csv")
}

fn load_events(path: &Path) -> CliResult<EventStream> {
    if is_csv(path) {
        Ok(events_from_csv(&fs::read_to_string(path)?)?)
    } else {
        Ok(read_events(path)?)
    }
}

fn micros_arg(text: Option<&str>, default: u64, what: &str) -> CliResult<u64> {
    match text {
        Some(t) => seconds_to_micros(&parse_seconds(t)?, what),
        None => Ok(default),
    }
}

fn shape_string(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub fn simulate(a: &SimulateArgs) -> CliResult<()> {
    let frames = read_clip(&a.frames)?;
    if frames.len() < 2 {
        return Err(usage("simulation needs at least two frames"));
    }
    let stream = simulate_events(&frames, a.threshold, a.eps)?;
    if is_csv(&a.output) {
        fs::write(&a.output, events_to_csv(&stream))?;
    } else {
        fs::write(&a.output, encode_events(&stream))?;
    }
    println!("events {}", stream.len());
    Ok(())
}

pub fn voxelize(a: &VoxelizeArgs) -> CliResult<()> {
    let stream = load_events(&a.events)?;
    let t0 = micros_arg(a.t0.as_deref(), stream.t_begin(), "--t0")?;
    let t1 = micros_arg(a.t1.as_deref(), stream.t_end(), "--t1")?;
    let grid = build_voxel_grid(&stream, a.bins, t0, t1)?;
    let tensor = grid.to_tensor();
    write_tensor(&a.output, &tensor)?;
    println!("shape {}", shape_string(tensor.shape()));
    println!("mass {}", grid.mass());
    Ok(())
}

pub fn tpr(a: &TprArgs) -> CliResult<()> {
    let r = parse_rational(&a.r).map_err(|_| usage(format!("cannot parse --r {:?}", a.r)))?;
    let stream = a.events.as_deref().map(load_events).transpose()?;
    let half_window = match (&a.half_window, &stream) {
        (Some(h), _) => parse_seconds(h)?,
        (None, Some(s)) => BigRational::new((s.t_end() - s.t_begin()).into(), 2_000_000.into()),
        (None, None) => return Err(usage("--half-window is required without an event file")),
    };
    if a.print_granularity {
        println!("{}", tpr_granularity(&half_window, a.levels, a.moments, &r)?);
    }
    let Some(stream) = stream else {
        if a.print_granularity {
            return Ok(());
        }
        return Err(usage("an event file is required to build a pyramid"));
    };
    let output = a.output.as_ref().ok_or_else(|| usage("-o is required to build a pyramid"))?;
    let center = match &a.center {
        Some(c) => seconds_to_micros_f64(&parse_seconds(c)?),
        None => (stream.t_begin() as f64 + stream.t_end() as f64) / 2.0,
    };
    let r = num_traits::ToPrimitive::to_f64(&r).unwrap_or(f64::NAN);
    let pyramid = build_tpr(&stream, center, seconds_to_micros_f64(&half_window), a.levels, a.moments, r)?;
    let tensor = pyramid.to_tensor();
    write_tensor(output, &tensor)?;
    println!("shape {}", shape_string(tensor.shape()));
    Ok(())
}

pub fn reconstruct(a: &ReconstructArgs) -> CliResult<()> {
    let stream = load_events(&a.events)?;
    let frame_time = micros_arg(a.frame_time.as_deref(), stream.t_begin(), "--frame-time")?;
    let at = seconds_to_micros(&parse_seconds(&a.at)?, "--at")?;
    let frame = read_frame(&a.frame, frame_time)?;
    let field = reconstruct_log_intensity(&frame, &stream, at, a.threshold, a.eps)?;
    fs::write(&a.output, encode_frame(&field.to_intensity(at, a.eps)))?;
    if let Some(path) = &a.log_tensor {
        let data = field.data.iter().map(|&v| v as f32).collect();
        write_tensor(path, &Tensor::from_vec(vec![field.height, field.width], data)?)?;
    }
    Ok(())
}

pub fn plan(a: &PlanArgs) -> CliResult<()> {
    let plans = plan_windows(a.frames, a.nin, a.skip, a.stride)?;
    let text = write_manifest(&plans);
    match &a.output {
        Some(path) => {
            fs::write(path, &text)?;
            println!("windows {}", plans.len());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn pipeline_config(a: &PipelineArgs, input_frames: usize) -> PipelineConfig {
    PipelineConfig {
        input_frames,
        voxel_bins: a.voxel_bins,
        tpr_levels: a.levels,
        tpr_moments: a.moments,
        tpr_attenuation: a.r,
        regional_channels: a.regional_channels,
        temporal_dim: a.temporal_dim,
        compressed_dim: a.compressed_dim,
        window_size: a.window,
        holistic_depth: a.depth,
        decoder_hidden: a.decoder_hidden,
        ..PipelineConfig::default()
    }
}

pub fn pipeline(a: &PipelineArgs, seed: u64) -> CliResult<()> {
    let frames = read_clip(&a.frames)?;
    let events = load_events(&a.events)?;
    let times = parse_time_list(&a.times)?;
    if times.is_empty() {
        return Err(usage("--times needs at least one value"));
    }
    let config = pipeline_config(a, frames.len());
    let params = match &a.params {
        Some(dir) => PipelineParams::from_named_tensors(&config, &load_named_tensors(dir)?)?,
        None => PipelineParams::seeded(&config, seed)?,
    };
    if let Some(dir) = &a.save_params {
        save_named_tensors(dir, &params.named_tensors())?;
    }
    let out = pipeline_forward(&frames, &events, a.scale, &times, &config, &params)?;

    fs::create_dir_all(&a.output)?;
    for (i, tensor) in out.frames.iter().enumerate() {
        let frame = frame_from_hwc(tensor, 0)?;
        fs::write(a.output.join(format!("out_{i:03}.ppm")), encode_frame(&frame))?;
    }
    let mut report = format!("seed {seed}\nscale {}\ntimes {}\noutputs {}\n", a.scale, a.times, out.frames.len());
    report.push_str(&out.report.to_string());
    fs::write(a.output.join("report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn format_psnr(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.4}")
    }
}

pub fn metrics(a: &MetricsArgs) -> CliResult<()> {
    let pred = list_pixmaps(&a.pred)?;
    let gt = list_pixmaps(&a.gt)?;
    if pred.len() != gt.len() {
        return Err(usage(format!("{} predicted frames but {} ground-truth frames", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(usage("no frames to evaluate"));
    }
    let stamps_path = a.gt.join(TIMESTAMPS_FILE);
    let times: Vec<String> = if stamps_path.exists() {
        let s = read_timestamps(&stamps_path)?;
        if s.len() != gt.len() {
            return Err(usage("ground-truth timestamps do not match the frame count"));
        }
        s.iter().map(|t| t.to_string()).collect()
    } else {
        (0..gt.len()).map(|i| i.to_string()).collect()
    };
    let mode = if a.y_only { ChannelMode::YOnly } else { ChannelMode::Rgb };
    let mut csv = String::from("index,time,psnr,ssim\n");
    let (mut psnr_sum, mut ssim_sum) = (0.0, 0.0);
    for (i, (p, g)) in pred.iter().zip(&gt).enumerate() {
        let r = evaluate(&read_frame(p, 0)?, &read_frame(g, 0)?, mode, a.border_crop)?;
        csv.push_str(&format!("{i},{},{},{:.6}\n", times[i], format_psnr(r.psnr), r.ssim));
        psnr_sum += r.psnr;
        ssim_sum += r.ssim;
    }
    fs::write(&a.output, csv)?;
    let n = pred.len() as f64;
    println!("frames {}", pred.len());
    println!("mean_psnr {}", format_psnr(psnr_sum / n));
    println!("mean_ssim {:.6}", ssim_sum / n);
    Ok(())
}

fn synthetic_stream(n: usize, seed: u64) -> CliResult<EventStream> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen_bool(0.5) { Polarity::Positive } else { Polarity::Negative };
            Event::new(rng.gen_range(0..346), rng.gen_range(0..260), rng.gen_range(0..=1_000_000), p)
        })
        .collect();
    events.sort_by(Event::canonical_cmp);
    Ok(EventStream::new(events, 346, 260, 0, 1_000_000)?)
}

fn checksum(t: &Tensor) -> u64 {
    let mut h = DefaultHasher::new();
    t.shape().hash(&mut h);
    for v in t.data() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

pub fn bench(a: &BenchArgs, seed: u64) -> CliResult<()> {
    if a.repeat == 0 {
        return Err(usage("--repeat must be at least 1"));
    }
    let stream = match (&a.events, a.synthetic) {
        (Some(path), None) => load_events(path)?,
        (None, Some(n)) => synthetic_stream(n, seed)?,
        _ => return Err(usage("pass either an event file or --synthetic N")),
    };
    let build = || -> CliResult<Tensor> {
        Ok(match a.repr {
            Repr::Voxel => build_voxel_grid(&stream, a.bins, stream.t_begin(), stream.t_end())?.to_tensor(),
            Repr::Tpr => {
                let (t0, t1) = (stream.t_begin() as f64, stream.t_end() as f64);
                build_tpr(&stream, (t0 + t1) / 2.0, (t1 - t0) / 2.0, 7, 2, 3.0)?.to_tensor()
            }
        })
    };
    let mut seconds = Vec::with_capacity(a.repeat);
    let mut last = None;
    for _ in 0..a.repeat {
        let start = Instant::now();
        let t = build()?;
        seconds.push(start.elapsed().as_secs_f64());
        last = Some(t);
    }
    let tensor = last.expect("at least one repeat");
    seconds.sort_by(f64::total_cmp);
    let median = seconds[seconds.len() / 2].max(1e-12);
    let bytes = encode_events(&stream).len();
    println!("repr {:?}", a.repr);
    println!("events {}", stream.len());
    println!("bytes {bytes}");
    println!("threads {}", rayon::current_num_threads());
    println!("median_seconds {median:.6}");
    println!("events_per_second {:.0}", stream.len() as f64 / median);
    println!("bytes_per_second {:.0}", bytes as f64 / median);
    println!("shape {}", shape_string(tensor.shape()));
    println!("checksum {:016x}", checksum(&tensor));
    if let Some(path) = &a.output {
        write_tensor(path, &tensor)?;
    }
    Ok(())
}
