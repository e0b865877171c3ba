use std::path::Path;

use crate::arch::{Network, NetworkConfig};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LDMR";
pub const FORMAT_VERSION: u32 = 1;

const CONFIG_FIELDS: usize = 6;
const HEADER_BYTES: usize = 4 + 4 + 4 * CONFIG_FIELDS;
const TRAILER_BYTES: usize = 4;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&u32::try_from(v).expect("model dimension fits in u32").to_le_bytes());
}

/// Exact byte length of the file [`encode_model`] produces for `net`.
pub fn expected_file_size(net: &Network) -> usize {
    let records: usize = net
        .store()
        .iter()
        .map(|p| 4 + p.name.len() + 4 + 4 * p.shape().len() + 4 * p.value.len())
        .sum();
    HEADER_BYTES + records + TRAILER_BYTES
}

/// Serialises the configuration and every tensor (trainable and running
/// statistics) in registration order, followed by a CRC-32 of all prior bytes.
pub fn encode_model(net: &Network) -> Vec<u8> {
    let mut buf = Vec::with_capacity(expected_file_size(net));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let c = net.config();
    for v in [c.in_channels, c.num_classes, c.stem_width, c.stage_widths[0], c.stage_widths[1], c.stage_widths[2]] {
        put_u32(&mut buf, v);
    }
    for p in net.store().iter() {
        put_u32(&mut buf, p.name.len());
        buf.extend_from_slice(p.name.as_bytes());
        let shape = p.shape();
        put_u32(&mut buf, shape.len());
        for d in shape {
            put_u32(&mut buf, d);
        }
        for v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated(format!("{what} at byte {} needs {n} bytes", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

/// Checks, in order: magic, version, total length against the layout the
/// stored config implies, checksum, then every record name and shape.
pub fn decode_model(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
    if &magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let mut cfg = [0usize; CONFIG_FIELDS];
    for v in cfg.iter_mut() {
        *v = r.u32("config block")? as usize;
    }
    let config = NetworkConfig {
        in_channels: cfg[0],
        num_classes: cfg[1],
        stem_width: cfg[2],
        stage_widths: [cfg[3], cfg[4], cfg[5]],
        seed: 0,
    };
    let mut net = Network::new(config).map_err(|e| Error::LayoutMismatch(format!("stored config is invalid: {e}")))?;

    let expected = expected_file_size(&net);
    if bytes.len() < expected {
        return Err(Error::Truncated(format!("{} bytes, layout needs {expected}", bytes.len())));
    }
    if bytes.len() > expected {
        return Err(Error::LayoutMismatch(format!(
            "{} trailing bytes after the checksum",
            bytes.len() - expected
        )));
    }
    let body = &bytes[..expected - TRAILER_BYTES];
    let stored = u32::from_le_bytes(bytes[expected - TRAILER_BYTES..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }

    for p in net.store_mut().iter_mut() {
        let len = r.u32("record name length")? as usize;
        let name = r.take(len, "record name")?;
        if name != p.name.as_bytes() {
            return Err(Error::LayoutMismatch(format!(
                "expected tensor {}, found {}",
                p.name,
                String::from_utf8_lossy(name)
            )));
        }
        let rank = r.u32("record rank")? as usize;
        let dims = (0..rank).map(|_| r.u32("record dims").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != p.shape() {
            return Err(Error::LayoutMismatch(format!("{} has shape {dims:?}, expected {:?}", p.name, p.shape())));
        }
        let raw = r.take(4 * p.value.len(), "record values")?;
        for (v, b) in p.value.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
    }
    Ok(net)
}

pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_model(net);
    assert_eq!(bytes.len(), expected_file_size(net), "model encoding length");
    std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes).map_err(|e| Error::Sample {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}
