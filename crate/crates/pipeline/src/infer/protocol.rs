//! The external predictor protocol, spoken over a subprocess's stdin and
//! stdout. All integers and floats are little-endian.
//!
//! ```text
//! request:  "PRD1" | count u32 | height u32 | width u32 | channels u32
//!           | count*H*W*C float32 in [0,1], row-major, channel-interleaved
//! response: "PRB1" | count u32 | height u32 | width u32 | count*H*W float32
//! error:    "ERR1" | length u32 | UTF-8 message
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use ftu_core::{ByteImage, CoreError, ProbMap};

use crate::error::{PipelineError, Result};
use crate::infer::predictors::{byte_to_unit, Predictor, ReferencePredictor};

pub const REQUEST_MAGIC: &[u8; 4] = b"PRD1";
pub const RESPONSE_MAGIC: &[u8; 4] = b"PRB1";
pub const ERROR_MAGIC: &[u8; 4] = b"ERR1";

/// Upper bound on elements in one frame, to refuse absurd allocations.
const MAX_ELEMENTS: u64 = 1 << 28;

/// A batch of float tiles, count * height * width * channels.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBatch {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl TileBatch {
    pub fn from_images(images: &[ByteImage]) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| PipelineError::InvalidArgument("empty tile batch".into()))?;
        let (w, h, c) = (first.width(), first.height(), first.channels());
        let mut data = Vec::with_capacity(images.len() * w * h * c);
        for image in images {
            if (image.width(), image.height(), image.channels()) != (w, h, c) {
                return Err(PipelineError::DimensionMismatch(
                    "tiles in a batch must share dimensions".into(),
                ));
            }
            data.extend(image.data().iter().map(|&v| byte_to_unit(v)));
        }
        Ok(Self { count: images.len(), height: h, width: w, channels: c, data })
    }

    /// Borrow the floats of tile `index`.
    pub fn tile(&self, index: usize) -> &[f32] {
        let stride = self.height * self.width * self.channels;
        &self.data[index * stride..(index + 1) * stride]
    }
}

fn write_u32<W: Write>(dst: &mut W, v: u32) -> Result<()> {
    dst.write_all(&v.to_le_bytes()).map_err(CoreError::Io)?;
    Ok(())
}

fn read_u32<R: Read>(src: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    src.read_exact(&mut buf).map_err(CoreError::Io)?;
    Ok(u32::from_le_bytes(buf))
}

fn write_f32s<W: Write>(dst: &mut W, values: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(values.len() * 4);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    dst.write_all(&buf).map_err(CoreError::Io)?;
    Ok(())
}

fn read_f32s<R: Read>(src: &mut R, n: usize) -> Result<Vec<f32>> {
    let mut payload = vec![0u8; n * 4];
    src.read_exact(&mut payload).map_err(CoreError::Io)?;
    Ok(payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn write_request<W: Write>(batch: &TileBatch, dst: &mut W) -> Result<()> {
    dst.write_all(REQUEST_MAGIC).map_err(CoreError::Io)?;
    write_u32(dst, batch.count as u32)?;
    write_u32(dst, batch.height as u32)?;
    write_u32(dst, batch.width as u32)?;
    write_u32(dst, batch.channels as u32)?;
    write_f32s(dst, &batch.data)
}

/// Reads one request frame. Returns `None` on a clean end of stream.
pub fn read_request<R: Read>(src: &mut R) -> Result<Option<TileBatch>> {
    let mut magic = [0u8; 4];
    let mut filled = 0;
    while filled < 4 {
        let n = src.read(&mut magic[filled..]).map_err(CoreError::Io)?;
        if n == 0 {
            if filled == 0 {
                return Ok(None);
            }
            return Err(PipelineError::Protocol("truncated request magic".into()));
        }
        filled += n;
    }
    if &magic != REQUEST_MAGIC {
        return Err(PipelineError::Protocol(format!(
            "bad request magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(src)? as u64;
    let height = read_u32(src)? as u64;
    let width = read_u32(src)? as u64;
    let channels = read_u32(src)? as u64;
    if count == 0 || height == 0 || width == 0 || !(channels == 1 || channels == 3) {
        return Err(PipelineError::Protocol(format!(
            "bad request geometry: count {count}, {height}x{width}x{channels}"
        )));
    }
    let elements = count * height * width * channels;
    if elements > MAX_ELEMENTS {
        return Err(PipelineError::Protocol(format!(
            "request of {elements} elements exceeds the {MAX_ELEMENTS} limit"
        )));
    }
    let data = read_f32s(src, elements as usize)?;
    if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(PipelineError::Protocol(format!(
            "request value {bad} outside [0, 1]"
        )));
    }
    Ok(Some(TileBatch {
        count: count as usize,
        height: height as usize,
        width: width as usize,
        channels: channels as usize,
        data,
    }))
}

pub fn write_response<W: Write>(maps: &[ProbMap], dst: &mut W) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| PipelineError::InvalidArgument("empty response".into()))?;
    dst.write_all(RESPONSE_MAGIC).map_err(CoreError::Io)?;
    write_u32(dst, maps.len() as u32)?;
    write_u32(dst, first.height() as u32)?;
    write_u32(dst, first.width() as u32)?;
    for map in maps {
        write_f32s(dst, map.data())?;
    }
    Ok(())
}

pub fn write_error<W: Write>(message: &str, dst: &mut W) -> Result<()> {
    dst.write_all(ERROR_MAGIC).map_err(CoreError::Io)?;
    write_u32(dst, message.len() as u32)?;
    dst.write_all(message.as_bytes()).map_err(CoreError::Io)?;
    Ok(())
}

/// Reads a response frame; an ERR1 frame surfaces as a `PredictorFailed`
/// error carrying the peer's message.
pub fn read_response<R: Read>(src: &mut R, context: &str) -> Result<Vec<ProbMap>> {
    let mut magic = [0u8; 4];
    src.read_exact(&mut magic).map_err(CoreError::Io)?;
    if &magic == ERROR_MAGIC {
        let len = read_u32(src)? as usize;
        if len as u64 > MAX_ELEMENTS {
            return Err(PipelineError::Protocol("oversized error message".into()));
        }
        let mut buf = vec![0u8; len];
        src.read_exact(&mut buf).map_err(CoreError::Io)?;
        let message = String::from_utf8_lossy(&buf).into_owned();
        return Err(PipelineError::PredictorFailed { context: context.to_owned(), message });
    }
    if &magic != RESPONSE_MAGIC {
        return Err(PipelineError::Protocol(format!(
            "bad response magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u32(src)? as u64;
    let height = read_u32(src)? as u64;
    let width = read_u32(src)? as u64;
    if count == 0 || height == 0 || width == 0 || count * height * width > MAX_ELEMENTS {
        return Err(PipelineError::Protocol(format!(
            "bad response geometry: count {count}, {height}x{width}"
        )));
    }
    let mut maps = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let data = read_f32s(src, (height * width) as usize)?;
        let map = ProbMap::new(width as usize, height as usize, data)
            .map_err(|e| PipelineError::Protocol(format!("invalid response payload: {e}")))?;
        maps.push(map);
    }
    Ok(maps)
}

/// Serves requests with a reference predictor until end of stream. A
/// malformed request is answered with an ERR1 frame before the error is
/// returned to the caller.
pub fn serve_requests<R: Read, W: Write>(
    predictor: &ReferencePredictor,
    reader: &mut R,
    writer: &mut W,
) -> Result<()> {
    loop {
        let batch = match read_request(reader) {
            Ok(Some(batch)) => batch,
            Ok(None) => return Ok(()),
            Err(err) => {
                let _ = write_error(&err.to_string(), writer);
                let _ = writer.flush();
                return Err(err);
            }
        };
        let mut maps = Vec::with_capacity(batch.count);
        for i in 0..batch.count {
            let data = predictor.predict_units(
                batch.width,
                batch.height,
                batch.channels,
                batch.tile(i),
            )?;
            maps.push(
                ProbMap::new(batch.width, batch.height, data)
                    .map_err(PipelineError::from)?,
            );
        }
        write_response(&maps, writer)?;
        writer.flush().map_err(CoreError::Io)?;
    }
}

struct ChildIo {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

/// A predictor running as a subprocess speaking the frame protocol. Calls
/// are serialized over the single pipe pair.
pub struct ExternalPredictor {
    command: Vec<String>,
    io: Mutex<ChildIo>,
}

impl ExternalPredictor {
    pub fn spawn(command: &[String]) -> Result<Self> {
        let program = command
            .first()
            .ok_or_else(|| PipelineError::InvalidArgument("empty predictor command".into()))?;
        let mut child = Command::new(program)
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| PipelineError::PredictorFailed {
                context: command.join(" "),
                message: format!("spawn failed: {e}"),
            })?;
        let stdin = BufWriter::new(child.stdin.take().expect("stdin was piped"));
        let stdout = BufReader::new(child.stdout.take().expect("stdout was piped"));
        Ok(Self {
            command: command.to_vec(),
            io: Mutex::new(ChildIo { child, stdin, stdout }),
        })
    }

    fn context(&self) -> String {
        self.command.join(" ")
    }
}

impl Predictor for ExternalPredictor {
    fn predict(&self, tile: &ByteImage) -> Result<ProbMap> {
        let batch = TileBatch::from_images(std::slice::from_ref(tile))?;
        let mut io = self.io.lock().expect("predictor mutex poisoned");
        write_request(&batch, &mut io.stdin)?;
        io.stdin.flush().map_err(CoreError::Io)?;
        let mut maps = read_response(&mut io.stdout, &self.context())?;
        if maps.len() != 1 {
            return Err(PipelineError::Protocol(format!(
                "expected 1 map in response, got {}",
                maps.len()
            )));
        }
        let map = maps.pop().expect("length checked");
        if map.width() != tile.width() || map.height() != tile.height() {
            return Err(PipelineError::Protocol(format!(
                "response map {}x{} does not match tile {}x{}",
                map.width(),
                map.height(),
                tile.width(),
                tile.height()
            )));
        }
        Ok(map)
    }

    fn name(&self) -> String {
        self.context()
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        if let Ok(mut io) = self.io.lock() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
