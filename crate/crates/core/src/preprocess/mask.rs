use std::collections::BTreeSet;
use std::path::Path;

use super::PreprocessError;
use crate::raster;

/// Row-major panoptic label raster: `0` is background, `k > 0` is mask `M_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, PreprocessError> {
        if labels.len() != (width as usize) * (height as usize) {
            return Err(PreprocessError::DimensionMismatch(format!(
                "{} labels for a {width}×{height} mask",
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    pub fn background(width: u32, height: u32) -> Self {
        Self { width, height, labels: vec![0; (width * height) as usize] }
    }

    #[inline]
    pub fn get(&self, u: u32, v: u32) -> u32 {
        self.labels[(v * self.width + u) as usize]
    }

    pub fn set(&mut self, u: u32, v: u32, id: u32) {
        let w = self.width;
        self.labels[(v * w + u) as usize] = id;
    }

    /// Distinct non-background ids, ascending.
    pub fn ids(&self) -> Vec<u32> {
        self.labels.iter().copied().filter(|&l| l != 0).collect::<BTreeSet<_>>().into_iter().collect()
    }

    pub fn pixels_of(&self, id: u32) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == id)
            .map(move |(i, _)| (i as u32 % w, i as u32 / w))
    }

    /// Diagonal of the bounding box of mask `id`, in pixels.
    pub fn bbox_diagonal(&self, id: u32) -> Option<f64> {
        let mut it = self.pixels_of(id);
        let (u0, v0) = it.next()?;
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) = (u0, u0, v0, v0);
        for (u, v) in it {
            lo_u = lo_u.min(u);
            hi_u = hi_u.max(u);
            lo_v = lo_v.min(v);
            hi_v = hi_v.max(v);
        }
        Some(((hi_u - lo_u) as f64).hypot((hi_v - lo_v) as f64))
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, PreprocessError> {
        let (w, h, data) = raster::read_pgm8(path)?;
        Self::new(w, h, data.into_iter().map(u32::from).collect())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), PreprocessError> {
        if self.labels.iter().any(|&l| l > 255) {
            return Err(PreprocessError::InvalidParameter("8-bit PGM cannot hold mask ids above 255".into()));
        }
        let data: Vec<u8> = self.labels.iter().map(|&l| l as u8).collect();
        raster::write_pgm8(path, self.width, self.height, &data)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_pixels_and_bbox() {
        let mut m = LabelMask::background(4, 3);
        m.set(1, 1, 2);
        m.set(3, 2, 2);
        m.set(0, 0, 5);
        assert_eq!(m.ids(), vec![2, 5]);
        assert_eq!(m.pixels_of(2).collect::<Vec<_>>(), vec![(1, 1), (3, 2)]);
        assert!((m.bbox_diagonal(2).unwrap() - 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.bbox_diagonal(9), None);
        assert!(LabelMask::new(2, 2, vec![0; 3]).is_err());
    }
}
