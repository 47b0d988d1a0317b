//! Two-dimensional `float32` NPY arrays (`(H, W)`, C order, little-endian).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use npyz::{DType, NpyFile, Order, TypeStr, WriterBuilder};

use crate::error::{Error, Result};
use crate::image::Image;

/// Reads a 2-D `<f4` (or `<f8`, narrowed) array.
pub fn read_image(path: &Path) -> Result<Image<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let npy = NpyFile::new(BufReader::new(file))
        .map_err(|e| Error::format(path, "header", e.to_string()))?;
    if npy.order() != Order::C {
        return Err(Error::format(path, "fortran_order", "expected C order"));
    }
    let shape = npy.shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::format(
            path,
            "shape",
            format!("expected a 2-D array, got {} dimensions", shape.len()),
        ));
    }
    let (height, width) = (shape[0] as usize, shape[1] as usize);
    let descr = npy.dtype().descr();
    let data: Vec<f32> = match descr.as_str() {
        "'<f4'" => npy
            .into_vec::<f32>()
            .map_err(|e| Error::format(path, "data", e.to_string()))?,
        "'<f8'" => npy
            .into_vec::<f64>()
            .map_err(|e| Error::format(path, "data", e.to_string()))?
            .into_iter()
            .map(|v| v as f32)
            .collect(),
        other => {
            return Err(Error::format(
                path,
                "descr",
                format!("expected '<f4', got {other}"),
            ))
        }
    };
    Image::from_vec(width, height, data)
        .ok_or_else(|| Error::format(path, "data", "element count does not match shape"))
}

pub fn write_image(path: &Path, image: &Image<f32>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let dtype = DType::Plain("<f4".parse::<TypeStr>().expect("valid type string"));
    let mut writer = npyz::WriteOptions::<f32>::new()
        .dtype(dtype)
        .shape(&[image.height() as u64, image.width() as u64])
        .writer(BufWriter::new(file))
        .begin_nd()
        .map_err(|e| Error::io(path, e))?;
    writer
        .extend(image.as_slice().iter().copied())
        .map_err(|e| Error::io(path, e))?;
    writer.finish().map_err(|e| Error::io(path, e))
}
