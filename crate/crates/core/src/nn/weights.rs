//! Binary weight container.
//!
//! ```text
//! "PAQE" | version u32 | in_channels u32 | channels u32 | blocks u32 | layers u32
//! per layer:
//!   conv: tag 0 u8 | in u32 | out u32 | relu u8 | weights f32… | bias f32…
//!   bn:   tag 1 u8 | channels u32 | gamma… | beta… | running_mean… | running_var…
//! ```
//! Integers and floats are little-endian. Layers appear in forward order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::batchnorm::BatchNorm;
use super::conv::{Activation, Conv2d};
use super::network::{NetConfig, QENetwork};

pub const MAGIC: &[u8; 4] = b"PAQE";
pub const FORMAT_VERSION: u32 = 1;
const TAG_CONV: u8 = 0;
const TAG_BN: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, v: &[f32]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn put_conv(out: &mut Vec<u8>, c: &Conv2d) {
    out.push(TAG_CONV);
    put_u32(out, c.in_ch as u32);
    put_u32(out, c.out_ch as u32);
    out.push(u8::from(c.activation == Activation::Relu));
    put_f32s(out, &c.weight);
    put_f32s(out, &c.bias);
}

pub fn weights_to_bytes(net: &QENetwork) -> Vec<u8> {
    let cfg = net.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, cfg.in_channels as u32);
    put_u32(&mut out, cfg.channels as u32);
    put_u32(&mut out, cfg.blocks as u32);
    put_u32(&mut out, (cfg.conv_count() + 1) as u32);
    put_conv(&mut out, &net.head);
    for b in &net.blocks {
        put_conv(&mut out, &b.conv_a);
        put_conv(&mut out, &b.conv_b);
    }
    put_conv(&mut out, &net.f2);
    out.push(TAG_BN);
    put_u32(&mut out, net.bn.channels() as u32);
    for v in [&net.bn.gamma, &net.bn.beta, &net.bn.running_mean, &net.bn.running_var] {
        put_f32s(&mut out, v);
    }
    for t in &net.tail {
        put_conv(&mut out, t);
    }
    put_conv(&mut out, &net.out);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format(format!("weight file truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let b = self.take(n * 4)?;
        let v: Vec<f32> = b
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format("weight file holds a non-finite value".into()));
        }
        Ok(v)
    }

    fn conv_into(&mut self, layer: &mut Conv2d, name: &str) -> Result<()> {
        let tag = self.u8()?;
        if tag != TAG_CONV {
            return Err(Error::Format(format!("expected conv layer for {name}, found tag {tag}")));
        }
        let (i, o) = (self.u32()? as usize, self.u32()? as usize);
        let relu = self.u8()?;
        let want_relu = u8::from(layer.activation == Activation::Relu);
        if i != layer.in_ch || o != layer.out_ch || relu != want_relu {
            return Err(Error::Format(format!(
                "{name}: stored shape {i}→{o} relu={relu}, expected {}→{} relu={want_relu}",
                layer.in_ch, layer.out_ch
            )));
        }
        layer.weight = self.f32s(layer.weight.len())?;
        layer.bias = self.f32s(layer.bias.len())?;
        Ok(())
    }

    fn bn_into(&mut self, bn: &mut BatchNorm) -> Result<()> {
        let tag = self.u8()?;
        if tag != TAG_BN {
            return Err(Error::Format(format!("expected batch norm layer, found tag {tag}")));
        }
        let c = self.u32()? as usize;
        if c != bn.channels() {
            return Err(Error::Format(format!("batch norm has {c} channels, expected {}", bn.channels())));
        }
        bn.gamma = self.f32s(c)?;
        bn.beta = self.f32s(c)?;
        bn.running_mean = self.f32s(c)?;
        bn.running_var = self.f32s(c)?;
        if bn.running_var.iter().any(|&v| v < 0.0) {
            return Err(Error::Format("negative running variance".into()));
        }
        Ok(())
    }
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<QENetwork> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::Format("weight file too short".into()))? != MAGIC {
        return Err(Error::Format("not a weight file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported weight format version {version}")));
    }
    let cfg = NetConfig {
        in_channels: r.u32()? as usize,
        channels: r.u32()? as usize,
        blocks: r.u32()? as usize,
    };
    let layers = r.u32()? as usize;
    if layers != cfg.conv_count() + 1 {
        return Err(Error::Format(format!(
            "header declares {} residual blocks but {layers} layers",
            cfg.blocks
        )));
    }
    cfg.validate().map_err(|e| Error::Format(e.to_string()))?;
    let mut net = QENetwork::zeros(cfg)?;
    r.conv_into(&mut net.head, "head")?;
    for (i, b) in net.blocks.iter_mut().enumerate() {
        r.conv_into(&mut b.conv_a, &format!("block {i} conv a"))?;
        r.conv_into(&mut b.conv_b, &format!("block {i} conv b"))?;
    }
    r.conv_into(&mut net.f2, "F2")?;
    r.bn_into(&mut net.bn)?;
    r.conv_into(&mut net.tail[0], "tail 1")?;
    r.conv_into(&mut net.tail[1], "tail 2")?;
    r.conv_into(&mut net.out, "output")?;
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - r.pos
        )));
    }
    Ok(net)
}

pub fn save_weights(net: &QENetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, weights_to_bytes(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<QENetwork> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    weights_from_bytes(&bytes)
}
