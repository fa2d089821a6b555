use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{Network, Real};

const MAGIC: &[u8; 4] = b"BENN";
const VERSION: u32 = 1;

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("truncated checkpoint".into())
    } else {
        Error::Io(e)
    }
}

impl<T: Real> Network<T> {
    /// Writes the parameters as little-endian `f32`: magic `BENN`, version,
    /// layer count, layer sizes, then every layer's weights (input-major)
    /// followed by its bias.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        let sizes = self.layer_sizes();
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in sizes {
            w.write_all(&(s as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for x in l.weights.iter().chain(&l.bias) {
                w.write_all(&x.to_f32().unwrap().to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a network checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&count) {
            return Err(Error::Format(format!("implausible layer count {count}")));
        }
        let sizes = (0..count)
            .map(|_| read_u32(&mut r).map(|s| s as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Network::zeros(&sizes).map_err(|e| Error::Format(e.to_string()))?;
        let mut b = [0u8; 4];
        for l in &mut net.layers {
            for x in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                r.read_exact(&mut b).map_err(truncated)?;
                let v = f32::from_le_bytes(b);
                if !v.is_finite() {
                    return Err(Error::NonFinite("checkpoint parameter".into()));
                }
                *x = T::from_f32(v).unwrap();
            }
        }
        if r.read(&mut b)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::super::NetworkSpec;
    use super::*;

    fn net() -> Network<f32> {
        Network::new(&NetworkSpec {
            layer_sizes: vec![7, 5, 3],
            init_seed: 11,
        })
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let a = net();
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"BENN");
        assert_eq!(buf.len(), 4 + 4 + 4 + 3 * 4 + 4 * a.parameter_count());
        let b = Network::<f32>::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let a = net();
        a.save(&path).unwrap();
        assert_eq!(Network::<f32>::load(&path).unwrap(), a);
    }

    #[test]
    fn rejects_damaged_files() {
        let mut buf = Vec::new();
        net().write_checkpoint(&mut buf).unwrap();
        assert!(Network::<f32>::read_checkpoint(&buf[..buf.len() - 1]).is_err());
        let mut longer = buf.clone();
        longer.push(0);
        assert!(Network::<f32>::read_checkpoint(&longer[..]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Network::<f32>::read_checkpoint(&bad[..]).is_err());
        let mut nan = buf.clone();
        let at = buf.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(
            Network::<f32>::read_checkpoint(&nan[..]),
            Err(Error::NonFinite(_))
        ));
    }
}
