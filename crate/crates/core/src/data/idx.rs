use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;

use super::Dataset;
use crate::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    let mut reader: Box<dyn Read> = if path.extension().is_some_and(|e| e == "gz") {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    reader.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn header(path: &Path, bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>> {
    if bytes.len() < 4 {
        return Err(Error::format(path, "truncated IDX header"));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    if word(0) != magic {
        return Err(Error::format(
            path,
            format!("bad IDX magic {:#010x}, expected {magic:#010x}", word(0)),
        ));
    }
    if bytes.len() < 4 * (1 + dims) {
        return Err(Error::format(path, "truncated IDX header"));
    }
    Ok((1..=dims).map(|i| word(i) as usize).collect())
}

/// Loads an IDX image/label pair (optionally gzipped). Pixels are scaled by 1/255;
/// the class count is `max(label) + 1`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read_all(ip)?;
    let dims = header(ip, &img, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &img[16..];
    if body.len() != count * rows * cols {
        return Err(Error::format(
            ip,
            format!("truncated image data: {} bytes for {count} images of {rows}x{cols}", body.len()),
        ));
    }
    let lab = read_all(lp)?;
    let n_labels = header(lp, &lab, LABELS_MAGIC, 1)?[0];
    let lbody = &lab[8..];
    if lbody.len() != n_labels {
        return Err(Error::format(lp, format!("truncated label data: {} bytes for {n_labels} labels", lbody.len())));
    }
    if n_labels != count {
        return Err(Error::format(lp, format!("{n_labels} labels but {} holds {count} images", ip.display())));
    }
    let labels: Vec<usize> = lbody.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(1, |m| m + 1);
    let features = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Dataset::new(vec![1, rows, cols], features, labels, num_classes)
}
