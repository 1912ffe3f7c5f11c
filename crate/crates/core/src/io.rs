//! Little-endian binary containers for events and tensors, a CSV event
//! codec, 8-bit portable pixmaps, and directory-based parameter sets.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::event_model::{Event, EventStream, IntensityFrame, Polarity};
use crate::tensor::Tensor;

pub const EVENT_MAGIC: &[u8; 4] = b"EVT1";
pub const EVENT_VERSION: u32 = 1;
pub const EVENT_HEADER_LEN: usize = 36;
pub const EVENT_RECORD_LEN: usize = 16;
pub const TENSOR_MAGIC: &[u8; 4] = b"TNS1";

/// Little-endian cursor over a byte slice.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self
            .buf
            .get(self.pos..end)
            .ok_or_else(|| Error::format(format!("truncated while reading {what} at byte {}", self.pos)))?;
        self.pos = end;
        Ok(bytes.try_into().expect("slice has length N"))
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        self.take::<2>(what).map(u16::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn encode_events(stream: &EventStream) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER_LEN + EVENT_RECORD_LEN * stream.len());
    out.extend_from_slice(EVENT_MAGIC);
    out.extend_from_slice(&EVENT_VERSION.to_le_bytes());
    out.extend_from_slice(&stream.width().to_le_bytes());
    out.extend_from_slice(&stream.height().to_le_bytes());
    out.extend_from_slice(&(stream.len() as u64).to_le_bytes());
    out.extend_from_slice(&stream.t_begin().to_le_bytes());
    out.extend_from_slice(&stream.t_end().to_le_bytes());
    for e in stream.events() {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.p.sign() as u8);
        out.extend_from_slice(&[0; 3]);
    }
    out
}

pub fn decode_events(bytes: &[u8]) -> Result<EventStream> {
    let mut r = Reader::new(bytes);
    if &r.take::<4>("magic")? != EVENT_MAGIC {
        return Err(Error::format("not an EVT1 event file"));
    }
    let version = r.u32("version")?;
    if version != EVENT_VERSION {
        return Err(Error::format(format!("unsupported event file version {version}")));
    }
    let width = r.u16("width")?;
    let height = r.u16("height")?;
    let count = r.u64("count")?;
    let t_begin = r.u64("t_begin")?;
    let t_end = r.u64("t_end")?;
    let expected = usize::try_from(count)
        .ok()
        .and_then(|c| c.checked_mul(EVENT_RECORD_LEN))
        .ok_or_else(|| Error::format(format!("record count {count} is too large")))?;
    if r.remaining() != expected {
        return Err(Error::format(format!(
            "header declares {count} records ({expected} bytes) but {} payload bytes follow",
            r.remaining()
        )));
    }
    let mut events = Vec::with_capacity(count as usize);
    for i in 0..count {
        let t = r.u64("record")?;
        let x = r.u16("record")?;
        let y = r.u16("record")?;
        let [p, ..] = r.take::<4>("record")?;
        let p = Polarity::from_sign(p as i8).ok_or_else(|| Error::format(format!("record {i}: polarity byte {p}")))?;
        events.push(Event::new(x, y, t, p));
    }
    EventStream::new(events, width, height, t_begin, t_end).map_err(|e| Error::format(e.to_string()))
}

pub fn write_events(path: impl AsRef<Path>, stream: &EventStream) -> Result<()> {
    fs::write(path, encode_events(stream))?;
    Ok(())
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    decode_events(&fs::read(path)?)
}

/// `t,x,y,p` lines preceded by a `# width=.. height=.. t_begin=.. t_end=..`
/// metadata line.
pub fn events_to_csv(stream: &EventStream) -> String {
    let mut s = format!(
        "# width={} height={} t_begin={} t_end={}\n",
        stream.width(),
        stream.height(),
        stream.t_begin(),
        stream.t_end()
    );
    for e in stream.events() {
        s.push_str(&format!("{},{},{},{}\n", e.t, e.x, e.y, e.p.sign()));
    }
    s
}

pub fn events_from_csv(text: &str) -> Result<EventStream> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let meta = lines
        .next()
        .and_then(|l| l.strip_prefix('#'))
        .ok_or_else(|| Error::format("CSV events must start with a '# width=..' line"))?;
    let mut fields = [None; 4];
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::format(format!("bad metadata entry {kv:?}")))?;
        let slot = match k {
            "width" => 0,
            "height" => 1,
            "t_begin" => 2,
            "t_end" => 3,
            _ => return Err(Error::format(format!("unknown metadata key {k:?}"))),
        };
        fields[slot] = Some(v.parse::<u64>().map_err(|_| Error::format(format!("bad value in {kv:?}")))?);
    }
    let [Some(w), Some(h), Some(t0), Some(t1)] = fields else {
        return Err(Error::format("CSV metadata is incomplete"));
    };
    let dim = |v: u64| u16::try_from(v).map_err(|_| Error::format(format!("dimension {v} exceeds u16")));
    let mut events = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::format(format!("CSV record {}: {line:?}", n + 1));
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let [t, x, y, p] = cols[..] else { return Err(bad()) };
        let p = p.parse::<i8>().ok().and_then(Polarity::from_sign).ok_or_else(bad)?;
        events.push(Event::new(
            x.parse().map_err(|_| bad())?,
            y.parse().map_err(|_| bad())?,
            t.parse().map_err(|_| bad())?,
            p,
        ));
    }
    EventStream::new(events, dim(w)?, dim(h)?, t0, t1).map_err(|e| Error::format(e.to_string()))
}

pub fn encode_tensor(tensor: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * tensor.ndim() + 4 * tensor.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&(tensor.ndim() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Reader::new(bytes);
    if &r.take::<4>("magic")? != TENSOR_MAGIC {
        return Err(Error::format("not a TNS1 tensor file"));
    }
    let ndim = r.u32("ndim")? as usize;
    if ndim > (bytes.len() - 8) / 4 {
        return Err(Error::format(format!("ndim {ndim} exceeds the file size")));
    }
    let shape = (0..ndim).map(|_| r.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let count = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| Error::format("tensor dims overflow"))?;
    if r.remaining() != count * 4 {
        return Err(Error::format(format!(
            "dims {shape:?} need {} payload bytes, found {}",
            count * 4,
            r.remaining()
        )));
    }
    let data = bytes[r.pos..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    // Non-finite payloads are stored faithfully; only shape errors are rejected.
    Tensor::from_vec(shape, data).map_err(|e| Error::format(e.to_string()))
}

pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    fs::write(path, encode_tensor(tensor))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_tensor(&fs::read(path)?)
}

/// 8-bit quantisation used for pixmap output.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// P5 for single-channel frames, P6 for RGB.
pub fn encode_frame(frame: &IntensityFrame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.pixels().iter().map(|&v| quantize(v)));
    out
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::format("truncated pixmap header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

/// Decodes a binary P5/P6 pixmap with maxval 255; samples map to `v/255`.
pub fn decode_frame(bytes: &[u8], timestamp: u64) -> Result<IntensityFrame> {
    let mut pos = 0;
    let channels = match header_token(bytes, &mut pos)?.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(Error::format(format!("unsupported pixmap magic {m:?}"))),
    };
    let mut num = |what: &str| -> Result<usize> {
        let tok = header_token(bytes, &mut pos)?;
        tok.parse().map_err(|_| Error::format(format!("bad pixmap {what} {tok:?}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height * channels;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::format(format!("pixmap raster truncated: need {n} bytes")))?;
    let pixels = raster.iter().map(|&b| b as f64 / 255.0).collect();
    IntensityFrame::new(timestamp, width, height, channels, pixels).map_err(|e| Error::format(e.to_string()))
}

pub fn write_frame(path: impl AsRef<Path>, frame: &IntensityFrame) -> Result<()> {
    fs::write(path, encode_frame(frame))?;
    Ok(())
}

pub fn read_frame(path: impl AsRef<Path>, timestamp: u64) -> Result<IntensityFrame> {
    decode_frame(&fs::read(path)?, timestamp)
}

/// Converts an `[H, W, 3]` tensor with values in `[0, 1]` to an RGB frame.
pub fn frame_from_hwc(tensor: &Tensor, timestamp: u64) -> Result<IntensityFrame> {
    let &[h, w, c] = tensor.shape() else {
        return Err(Error::invalid(format!("expected [H, W, C], got {:?}", tensor.shape())));
    };
    let px = tensor.data().iter().map(|&v| (v as f64).clamp(0.0, 1.0)).collect();
    IntensityFrame::new(timestamp, w, h, c, px)
}

/// Converts a frame to a `[C, H, W]` tensor.
pub fn frame_to_chw(frame: &IntensityFrame) -> Tensor {
    let (w, h, c) = (frame.width(), frame.height(), frame.channels());
    let mut data = Vec::with_capacity(w * h * c);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                data.push(frame.get(x, y, ch) as f32);
            }
        }
    }
    Tensor::from_vec(vec![c, h, w], data).expect("frame pixels are finite")
}

pub const PARAM_MANIFEST: &str = "manifest.txt";

/// Writes each named tensor to `<dir>/<index>.tns` and a `manifest.txt`
/// with one `name file` line per tensor.
pub fn save_named_tensors(dir: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = fs::File::create(dir.join(PARAM_MANIFEST))?;
    for (i, (name, t)) in tensors.iter().enumerate() {
        if name.contains(char::is_whitespace) || name.is_empty() {
            return Err(Error::invalid(format!("parameter name {name:?} must be non-empty without spaces")));
        }
        let file = format!("{i:04}.tns");
        write_tensor(dir.join(&file), t)?;
        writeln!(manifest, "{name} {file}")?;
    }
    Ok(())
}

pub fn load_named_tensors(dir: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    let dir = dir.as_ref();
    let text = fs::read_to_string(dir.join(PARAM_MANIFEST))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let (name, file) = line
                .split_once(' ')
                .ok_or_else(|| Error::format(format!("bad parameter manifest line {line:?}")))?;
            let file = file.trim();
            if file.contains(['/', '\\']) || file.starts_with('.') {
                return Err(Error::format(format!("parameter file {file:?} must be a plain name")));
            }
            Ok((name.to_string(), read_tensor(dir.join(file))?))
        })
        .collect()
}
