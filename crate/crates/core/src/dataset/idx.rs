//! The IDX container used by MNIST: a big-endian magic number whose low byte
//! is the tensor rank, one big-endian `u32` per dimension, then raw bytes.

use crate::error::{Error, Result};

use super::Dataset;

pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Number of entries along the first axis.
    pub fn count(&self) -> usize {
        self.dims.first().copied().unwrap_or(0)
    }

    /// Length of one item (product of the trailing dimensions).
    pub fn item_len(&self) -> usize {
        self.dims.iter().skip(1).product()
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx {
            offset: bytes.len(),
            message: format!("header truncated while reading u32 at offset {offset}"),
        })
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let magic = read_u32(bytes, 0)?;
    let rank = match magic {
        LABELS_MAGIC => 1,
        IMAGES_MAGIC => 3,
        other => {
            return Err(Error::Idx {
                offset: 0,
                message: format!("bad magic 0x{other:08x}"),
            })
        }
    };
    let mut dims = Vec::with_capacity(rank);
    let mut total: usize = 1;
    for r in 0..rank {
        let offset = 4 + 4 * r;
        let d = read_u32(bytes, offset)? as usize;
        total = total.checked_mul(d).ok_or_else(|| Error::Idx {
            offset,
            message: "dimension product overflows".into(),
        })?;
        dims.push(d);
    }
    let start = 4 + 4 * rank;
    let expected_end = start.checked_add(total).ok_or_else(|| Error::Idx {
        offset: start,
        message: "payload length overflows".into(),
    })?;
    if bytes.len() < expected_end {
        return Err(Error::Idx {
            offset: bytes.len(),
            message: format!(
                "payload truncated: {} of {total} bytes present",
                bytes.len() - start
            ),
        });
    }
    if bytes.len() > expected_end {
        return Err(Error::Idx {
            offset: expected_end,
            message: format!("{} unexpected trailing bytes", bytes.len() - expected_end),
        });
    }
    Ok(IdxTensor {
        dims,
        data: bytes[start..].to_vec(),
    })
}

/// Serializes a rank-1 or rank-3 tensor. Used to build fixtures.
pub fn encode_idx(tensor: &IdxTensor) -> Result<Vec<u8>> {
    let magic = match tensor.dims.len() {
        1 => LABELS_MAGIC,
        3 => IMAGES_MAGIC,
        r => return Err(Error::invalid(format!("IDX rank {r} unsupported"))),
    };
    let total: usize = tensor.dims.iter().product();
    if total != tensor.data.len() {
        return Err(Error::DimensionMismatch {
            expected: total,
            actual: tensor.data.len(),
        });
    }
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + total);
    out.extend_from_slice(&magic.to_be_bytes());
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    Ok(out)
}

/// Joins an image tensor and a label tensor; pixels are scaled to [0, 1].
/// `num_classes` defaults to one past the largest label.
pub fn dataset_from_idx(images: &IdxTensor, labels: &IdxTensor, num_classes: Option<usize>) -> Result<Dataset> {
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(Error::invalid("expected a rank-3 image tensor and a rank-1 label tensor"));
    }
    if images.count() != labels.count() {
        return Err(Error::DimensionMismatch {
            expected: images.count(),
            actual: labels.count(),
        });
    }
    let features = images.data.iter().map(|&b| f32::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&b| usize::from(b)).collect();
    let classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(1, |m| m + 1));
    Dataset::new(features, images.item_len(), labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_labels_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 2, 7, 2];
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![2]);
        assert_eq!(t.data, vec![7, 2]);
    }

    #[test]
    fn one_image_scaled() {
        let img = [0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 255, 128, 64];
        let lab = [0, 0, 8, 1, 0, 0, 0, 1, 3];
        let d = dataset_from_idx(&parse_idx(&img).unwrap(), &parse_idx(&lab).unwrap(), Some(10)).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.row(0), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert_eq!(d.labels(), &[3]);
    }

    #[test]
    fn truncated_payload_reports_final_offset() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 2, 7];
        match parse_idx(&bytes) {
            Err(Error::Idx { offset, .. }) => assert_eq!(offset, 9),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_at_zero() {
        match parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]) {
            Err(Error::Idx { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_overflow() {
        let bytes = [0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255];
        if usize::BITS == 64 {
            // 2^96 overflows on the third dimension
            match parse_idx(&bytes) {
                Err(Error::Idx { offset, .. }) => assert_eq!(offset, 12),
                other => panic!("expected overflow, got {other:?}"),
            }
        }
    }
}
