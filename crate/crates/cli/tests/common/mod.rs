#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use evtpr_core::io::write_frame;
use evtpr_core::IntensityFrame;

pub fn evtpr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evtpr"))
        .args(args)
        .env_remove("EVTPR_THREADS")
        .output()
        .expect("spawn evtpr")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn write_clip(dir: &Path, frames: &[IntensityFrame]) {
    fs::create_dir_all(dir).unwrap();
    let mut stamps = String::new();
    for (i, f) in frames.iter().enumerate() {
        let ext = if f.channels() == 1 { "pgm" } else { "ppm" };
        write_frame(dir.join(format!("frame_{i:03}.{ext}")), f).unwrap();
        stamps.push_str(&format!("{}\n", f.timestamp()));
    }
    fs::write(dir.join("timestamps.txt"), stamps).unwrap();
}

/// A smoothly brightening 8-bit-exact RGB clip with timestamps `k·dt`.
pub fn rgb_clip(w: usize, h: usize, n: usize, dt: u64) -> Vec<IntensityFrame> {
    (0..n)
        .map(|k| {
            let px = (0..w * h * 3)
                .map(|i| {
                    let (pix, ch) = (i / 3, i % 3);
                    let (x, y) = ((pix % w) as f64, (pix / w) as f64);
                    let v = (0.2 + 0.03 * x + 0.01 * y + 0.05 * k as f64 + 0.02 * ch as f64).min(1.0);
                    (v * 255.0).round() / 255.0
                })
                .collect();
            IntensityFrame::new(k as u64 * dt, w, h, 3, px).unwrap()
        })
        .collect()
}
