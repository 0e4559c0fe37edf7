//! "FSBB" backbone checkpoint: layer-shape table, parameter blobs,
//! running batchnorm statistics, trailing CRC32. A plain-text sidecar
//! (same path + ".txt") echoes the producing configuration.

use super::model::{BackboneParams, BatchNormLayer, HiddenBlock, LinearLayer};
use crate::datakit::binfmt::{read_file, Reader, Writer};
use crate::ndgrad::{Param, Tensor};
use crate::Result;
use std::path::{Path, PathBuf};

const BACKBONE_MAGIC: &[u8; 4] = b"FSBB";

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn save_backbone(path: &Path, bb: &BackboneParams) -> Result<()> {
    let mut w = Writer::new(BACKBONE_MAGIC);
    w.u32(bb.input_dim() as u32);
    w.u32(bb.widths().len() as u32);
    for &width in bb.widths() {
        w.u32(width as u32);
    }
    w.u32(bb.n_classes() as u32);
    for &id in bb.class_ids() {
        w.u32(id);
    }
    for block in &bb.blocks {
        w.f64s(block.linear.weight.value.data());
        w.f64s(block.linear.bias.value.data());
        w.f64s(block.bn.gamma.value.data());
        w.f64s(block.bn.beta.value.data());
        w.f64s(&block.bn.running_mean);
        w.f64s(&block.bn.running_var);
    }
    w.f64s(bb.output.weight.value.data());
    w.f64s(bb.output.bias.value.data());
    w.finish(path)
}

/// Writes the checkpoint plus its provenance sidecar.
pub fn save_backbone_with_sidecar(path: &Path, bb: &BackboneParams, config_echo: &str) -> Result<()> {
    save_backbone(path, bb)?;
    let sidecar = sidecar_path(path);
    std::fs::write(&sidecar, config_echo)
        .map_err(|e| crate::Error::io(sidecar.display().to_string(), e))
}

pub fn load_backbone(path: &Path) -> Result<BackboneParams> {
    let buf = read_file(path)?;
    let mut r = Reader::open(path, &buf, BACKBONE_MAGIC)?;
    let input_dim = r.u32()? as usize;
    let n_hidden = r.u32()? as usize;
    let widths: Vec<usize> = (0..n_hidden)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let n_classes = r.u32()? as usize;
    let class_ids: Vec<u32> = (0..n_classes).map(|_| r.u32()).collect::<Result<_>>()?;

    let mut blocks = Vec::with_capacity(n_hidden);
    let mut fan_in = input_dim;
    for &width in &widths {
        let weight = Tensor::from_vec(vec![fan_in, width], r.f64s(fan_in * width)?)?;
        let bias = Tensor::vector(r.f64s(width)?);
        let gamma = Tensor::vector(r.f64s(width)?);
        let beta = Tensor::vector(r.f64s(width)?);
        let running_mean = r.f64s(width)?;
        let running_var = r.f64s(width)?;
        blocks.push(HiddenBlock {
            linear: LinearLayer {
                weight: Param::new(weight),
                bias: Param::new(bias),
            },
            bn: BatchNormLayer {
                gamma: Param::decay_exempt(gamma),
                beta: Param::decay_exempt(beta),
                running_mean,
                running_var,
            },
        });
        fan_in = width;
    }
    let out_weight = Tensor::from_vec(vec![fan_in, n_classes], r.f64s(fan_in * n_classes)?)?;
    let out_bias = Tensor::vector(r.f64s(n_classes)?);
    r.expect_end()?;
    Ok(BackboneParams::from_parts(
        input_dim,
        widths,
        class_ids,
        blocks,
        LinearLayer {
            weight: Param::new(out_weight),
            bias: Param::new(out_bias),
        },
    ))
}
