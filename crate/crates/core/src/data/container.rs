//! GFZD: flat little-endian dataset container.
//!
//! ```text
//! "GFZD" | version u16 | count u32 | height u16 | width u16 | channels u8 | class_count u8
//! then per sample: height·width·channels pixel bytes (HWC), class_count label bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, Sample};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GFZD";
pub const VERSION: u16 = 1;

pub fn write_gfzd(data: &Dataset, mut w: impl Write) -> Result<()> {
    let narrow = |v: usize, what: &str, max: usize| {
        if v > max {
            Err(Error::Format(format!("{what} {v} does not fit the container header")))
        } else {
            Ok(v)
        }
    };
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(narrow(data.samples.len(), "sample count", u32::MAX as usize)? as u32).to_le_bytes())?;
    let side = narrow(data.size, "image size", u16::MAX as usize)? as u16;
    w.write_all(&side.to_le_bytes())?;
    w.write_all(&side.to_le_bytes())?;
    w.write_all(&[3, narrow(data.class_count, "class count", u8::MAX as usize)? as u8])?;
    for s in &data.samples {
        w.write_all(&s.pixels)?;
        w.write_all(&s.labels)?;
    }
    w.flush()?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b)?;
    Ok(b)
}

/// Reads a container. Coverage masks are not stored, so loaded samples
/// carry none and keep texture id 0.
pub fn read_gfzd(mut r: impl Read) -> Result<Dataset> {
    if &take::<4>(&mut r)? != MAGIC {
        return Err(Error::Format("not a GFZD container".into()));
    }
    let version = u16::from_le_bytes(take(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported GFZD version {version}")));
    }
    let count = u32::from_le_bytes(take(&mut r)?) as usize;
    let height = u16::from_le_bytes(take(&mut r)?) as usize;
    let width = u16::from_le_bytes(take(&mut r)?) as usize;
    let [channels, class_count] = take::<2>(&mut r)?;
    if height != width || channels != 3 {
        return Err(Error::Format(format!(
            "expected square RGB images, got {height}×{width}×{channels}"
        )));
    }
    let mut samples = Vec::with_capacity(count);
    for id in 0..count {
        let mut pixels = vec![0u8; height * width * 3];
        r.read_exact(&mut pixels)?;
        let mut labels = vec![0u8; class_count as usize];
        r.read_exact(&mut labels)?;
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Format(format!("sample {id} has a non-binary label")));
        }
        samples.push(Sample {
            id: id as u32,
            pixels,
            labels,
            coverage: None,
            texture: 0,
        });
    }
    Ok(Dataset {
        size: height,
        class_count: class_count as usize,
        samples,
    })
}

pub fn save_gfzd(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_gfzd(data, BufWriter::new(File::create(path)?))
}

pub fn load_gfzd(path: impl AsRef<Path>) -> Result<Dataset> {
    read_gfzd(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let data = Dataset {
            size: 2,
            class_count: 3,
            samples: vec![Sample {
                id: 0,
                pixels: (0..12).collect(),
                labels: vec![1, 0, 1],
                coverage: None,
                texture: 0,
            }],
        };
        let mut buf = Vec::new();
        write_gfzd(&data, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"GFZD");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..10], &[1, 0, 0, 0]);
        assert_eq!(&buf[10..14], &[2, 0, 2, 0]);
        assert_eq!(&buf[14..16], &[3, 3]);
        assert_eq!(buf.len(), 16 + 12 + 3);
        assert_eq!(read_gfzd(buf.as_slice()).unwrap(), data);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_gfzd(&b"NOPE"[..]).is_err());
        assert!(read_gfzd(&b"GFZD\x02\x00"[..]).is_err());
        let mut truncated = b"GFZD\x01\x00\x01\x00\x00\x00\x02\x00\x02\x00\x03\x01".to_vec();
        truncated.extend([0u8; 5]);
        assert!(read_gfzd(truncated.as_slice()).is_err());
    }
}
