//! Label masks, binary PGM I/O and connected components.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, HypothesisError};
use crate::geometry::Point2;

/// Row-major grid of labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn from_labels(width: usize, height: usize, labels: Vec<u16>) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        assert_eq!(labels.len(), width * height, "label buffer size mismatch");
        Self {
            width,
            height,
            labels,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u16) {
        self.labels[y * self.width + x] = v;
    }

    pub fn max_label(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Encodes as binary PGM (P5). Masks whose labels fit in a byte are
    /// written 8-bit with maxval 255, others 16-bit big-endian.
    pub fn to_pgm(&self) -> Vec<u8> {
        let wide = self.max_label() > 255;
        let maxval = if wide { 65535 } else { 255 };
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, maxval).into_bytes();
        if wide {
            for &v in &self.labels {
                out.extend_from_slice(&v.to_be_bytes());
            }
        } else {
            out.extend(self.labels.iter().map(|&v| v as u8));
        }
        out
    }

    pub fn from_pgm(bytes: &[u8]) -> Result<Self, String> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(format!("unsupported magic {:?}", fields[0]));
        }
        let parse =
            |s: &str, what: &str| s.parse::<usize>().map_err(|_| format!("bad {what} {s:?}"));
        let width = parse(&fields[1], "width")?;
        let height = parse(&fields[2], "height")?;
        let maxval = parse(&fields[3], "maxval")?;
        if width == 0 || height == 0 {
            return Err("zero dimension".into());
        }
        if maxval == 0 || maxval > 65535 {
            return Err(format!("maxval {maxval} out of range"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let n = width * height;
        let raster = bytes.get(pos..).unwrap_or(&[]);
        let labels = if maxval < 256 {
            if raster.len() < n {
                return Err("truncated raster".into());
            }
            raster[..n].iter().map(|&v| v as u16).collect()
        } else {
            if raster.len() < 2 * n {
                return Err("truncated raster".into());
            }
            raster[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        };
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn read_pgm(path: &Path) -> Result<Self, Error> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm(&bytes).map_err(|reason| {
            HypothesisError::BadMask {
                path: path.to_path_buf(),
                reason,
            }
            .into()
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), Error> {
        fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

/// File name of the mask for `frame`.
pub fn mask_file_name(frame: u32) -> String {
    format!("mask_t{frame:04}.pgm")
}

/// Reads every `mask_tNNNN.pgm` in `dir`, keyed by frame number.
pub fn read_mask_dir(dir: &Path) -> Result<BTreeMap<u32, LabelMask>, Error> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(frame) = name
            .strip_prefix("mask_t")
            .and_then(|s| s.strip_suffix(".pgm"))
            .and_then(|s| s.parse::<u32>().ok())
        else {
            continue;
        };
        out.insert(frame, LabelMask::read_pgm(&entry.path())?);
    }
    if out.is_empty() {
        return Err(Error::NoMasks(dir.to_path_buf()));
    }
    Ok(out)
}

/// A connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    /// Pixel coordinates in raster order.
    pub pixels: Vec<(u32, u32)>,
    pub centroid: Point2,
}

impl Component {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixel_points(&self) -> Vec<Point2> {
        self.pixels
            .iter()
            .map(|&(x, y)| Point2::new(x as f64, y as f64))
            .collect()
    }
}

const NEIGHBORS8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Splits the foreground into components.
///
/// A mask with a single non-zero value is treated as binary and split into
/// 8-connected regions. A mask with several distinct labels is treated as
/// instance-labeled and every label becomes one component. Components with
/// fewer than `min_area` pixels are dropped; the rest are numbered in the
/// raster order of their first pixel.
pub fn connected_components(mask: &LabelMask, min_area: usize) -> Vec<Component> {
    let mut distinct = mask.labels.iter().copied().filter(|&v| v != 0);
    let first = distinct.next();
    let labeled = first.is_some_and(|f| distinct.any(|v| v != f));

    let mut groups: Vec<Vec<(u32, u32)>> = Vec::new();
    if labeled {
        let mut by_label: BTreeMap<u16, usize> = BTreeMap::new();
        for y in 0..mask.height {
            for x in 0..mask.width {
                let v = mask.get(x, y);
                if v == 0 {
                    continue;
                }
                let idx = *by_label.entry(v).or_insert_with(|| {
                    groups.push(Vec::new());
                    groups.len() - 1
                });
                groups[idx].push((x as u32, y as u32));
            }
        }
    } else {
        let mut seen = vec![false; mask.labels.len()];
        let mut stack = Vec::new();
        for y in 0..mask.height {
            for x in 0..mask.width {
                let i = y * mask.width + x;
                if seen[i] || mask.labels[i] == 0 {
                    continue;
                }
                seen[i] = true;
                stack.push((x, y));
                let mut pixels = Vec::new();
                while let Some((px, py)) = stack.pop() {
                    pixels.push((px as u32, py as u32));
                    for (dx, dy) in NEIGHBORS8 {
                        let nx = px as i64 + dx;
                        let ny = py as i64 + dy;
                        if nx < 0 || ny < 0 || nx >= mask.width as i64 || ny >= mask.height as i64 {
                            continue;
                        }
                        let j = ny as usize * mask.width + nx as usize;
                        if !seen[j] && mask.labels[j] != 0 {
                            seen[j] = true;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
                pixels.sort_unstable_by_key(|&(x, y)| (y, x));
                groups.push(pixels);
            }
        }
    }

    groups
        .into_iter()
        .filter(|g| g.len() >= min_area && !g.is_empty())
        .enumerate()
        .map(|(id, pixels)| {
            let n = pixels.len() as f64;
            let cx = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
            let cy = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
            Component {
                id,
                pixels,
                centroid: Point2::new(cx, cy),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill_rect(m: &mut LabelMask, x0: usize, y0: usize, w: usize, h: usize, v: u16) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                m.set(x, y, v);
            }
        }
    }

    #[test]
    fn empty_mask_has_no_components() {
        assert!(connected_components(&LabelMask::new(10, 10), 0).is_empty());
    }

    #[test]
    fn two_squares() {
        let mut m = LabelMask::new(30, 20);
        fill_rect(&mut m, 1, 1, 5, 5, 1);
        fill_rect(&mut m, 15, 10, 6, 6, 1);
        let cc = connected_components(&m, 0);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].area(), 25);
        assert_eq!(cc[1].area(), 36);
        assert_eq!(cc[0].centroid, Point2::new(3.0, 3.0));
    }

    #[test]
    fn diagonal_touch_is_connected_and_min_area_filters() {
        let mut m = LabelMask::new(10, 10);
        fill_rect(&mut m, 0, 0, 3, 3, 1);
        fill_rect(&mut m, 3, 3, 3, 3, 1);
        m.set(9, 9, 1);
        let cc = connected_components(&m, 0);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].area(), 18);
        assert_eq!(connected_components(&m, 2).len(), 1);
    }

    #[test]
    fn distinct_labels_are_separate_components() {
        let mut m = LabelMask::new(10, 4);
        fill_rect(&mut m, 0, 0, 3, 3, 1);
        fill_rect(&mut m, 3, 0, 3, 3, 2);
        let cc = connected_components(&m, 0);
        assert_eq!(cc.len(), 2);
        assert_eq!(cc[0].area(), 9);
    }

    #[test]
    fn pgm_roundtrip_8_and_16_bit() {
        let mut m = LabelMask::new(7, 3);
        m.set(2, 1, 255);
        assert_eq!(LabelMask::from_pgm(&m.to_pgm()).unwrap(), m);
        m.set(3, 2, 4000);
        let bytes = m.to_pgm();
        assert!(bytes.starts_with(b"P5\n7 3\n65535\n"));
        assert_eq!(LabelMask::from_pgm(&bytes).unwrap(), m);
    }

    #[test]
    fn pgm_header_comments_and_errors() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 9]);
        let m = LabelMask::from_pgm(&bytes).unwrap();
        assert_eq!(m.labels, vec![0, 9]);
        assert!(LabelMask::from_pgm(b"P2\n2 1\n255\n01").is_err());
        assert!(LabelMask::from_pgm(b"P5\n4 4\n255\n\x01").is_err());
    }
}
