use serde::{Deserialize, Serialize};

use super::DetectError;
use crate::projection::Projection;

/// How block offsets along one image side are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TileSpec {
    /// `n` blocks per side with stride `floor((side - block) / (n - 1))`;
    /// the last block is pinned to the far edge.
    PerSide(usize),
    /// Fixed stride; a final block is added at the far edge if the stride
    /// does not land there exactly.
    Stride(usize),
}

/// Offsets of blocks of size `block` along a side of length `side`.
pub fn tile_offsets(side: usize, block: usize, spec: TileSpec) -> Result<Vec<usize>, DetectError> {
    if block == 0 || block > side {
        return Err(DetectError::Tiling(format!("block {block} does not fit side {side}")));
    }
    match spec {
        TileSpec::PerSide(0) => Err(DetectError::Tiling("zero blocks per side".into())),
        TileSpec::PerSide(1) if block == side => Ok(vec![0]),
        TileSpec::PerSide(1) => Err(DetectError::Tiling(format!("one block of {block} leaves side {side} uncovered"))),
        TileSpec::PerSide(n) => {
            let stride = (side - block) / (n - 1);
            if stride < 1 {
                return Err(DetectError::Tiling(format!(
                    "stride < 1 for {n} blocks of {block} on side {side}"
                )));
            }
            if stride > block || (n - 2) * stride + block < side - block {
                return Err(DetectError::Tiling(format!("{n} blocks of {block} leave gaps on side {side}")));
            }
            let mut v: Vec<usize> = (0..n - 1).map(|i| i * stride).collect();
            v.push(side - block);
            Ok(v)
        }
        TileSpec::Stride(s) if s == 0 || s > block => {
            Err(DetectError::Tiling(format!("stride {s} must be in [1, {block}]")))
        }
        TileSpec::Stride(s) => {
            let mut v: Vec<usize> = (0..=(side - block) / s).map(|i| i * s).collect();
            if *v.last().unwrap() != side - block {
                v.push(side - block);
            }
            Ok(v)
        }
    }
}

/// A block cut from an image, with its top-left offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Tile {
    pub row: usize,
    pub col: usize,
    pub data: Projection,
}

/// Cuts `img` into square blocks; rows and columns are tiled independently.
pub fn tile_image(img: &Projection, block: usize, spec: TileSpec) -> Result<Vec<Tile>, DetectError> {
    let rows = tile_offsets(img.rows(), block, spec)?;
    let cols = tile_offsets(img.cols(), block, spec)?;
    let mut out = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            out.push(Tile { row: r, col: c, data: img.crop(r, c, block, block) });
        }
    }
    Ok(out)
}

/// Reassembles tiles into a `rows x cols` image, averaging where blocks
/// overlap. Every pixel must be covered by at least one tile.
pub fn merge_tiles(tiles: &[Tile], rows: usize, cols: usize) -> Result<Projection, DetectError> {
    let first = tiles.first().ok_or_else(|| DetectError::Tiling("no tiles to merge".into()))?;
    let (pitch, kind) = (first.data.pixel_pitch(), first.data.kind());
    // Averages are accumulated as offsets from the first contribution so
    // that identical contributions reproduce the value bit-exactly.
    let mut first_val = vec![0.0; rows * cols];
    let mut delta = vec![0.0; rows * cols];
    let mut count = vec![0u32; rows * cols];
    for t in tiles {
        let (h, w) = (t.data.rows(), t.data.cols());
        if t.row + h > rows || t.col + w > cols {
            return Err(DetectError::Tiling(format!(
                "tile at ({}, {}) of {h}x{w} exceeds {rows}x{cols}",
                t.row, t.col
            )));
        }
        for r in 0..h {
            for c in 0..w {
                let i = (t.row + r) * cols + t.col + c;
                let v = t.data.get(r, c);
                if count[i] == 0 {
                    first_val[i] = v;
                } else {
                    delta[i] += v - first_val[i];
                }
                count[i] += 1;
            }
        }
    }
    if let Some(i) = count.iter().position(|n| *n == 0) {
        return Err(DetectError::Coverage { row: i / cols, col: i % cols });
    }
    let data = (0..rows * cols).map(|i| first_val[i] + delta[i] / count[i] as f64).collect();
    Projection::from_data(rows, cols, pitch, kind, data).map_err(|e| DetectError::Tiling(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::ProjectionKind;

    #[test]
    fn per_side_counts() {
        let o = tile_offsets(1024, 256, TileSpec::PerSide(12)).unwrap();
        assert_eq!(o.len(), 12);
        assert_eq!(o[1], 69);
        assert_eq!(*o.last().unwrap(), 768);
        assert_eq!(tile_offsets(2000, 256, TileSpec::PerSide(13)).unwrap().len(), 13);
        assert_eq!(tile_offsets(512, 512, TileSpec::PerSide(1)).unwrap(), vec![0]);
        assert!(tile_offsets(10, 8, TileSpec::PerSide(4)).is_err());
        assert!(tile_offsets(10, 12, TileSpec::PerSide(1)).is_err());
    }

    #[test]
    fn stride_offsets() {
        assert_eq!(tile_offsets(10, 4, TileSpec::Stride(3)).unwrap(), vec![0, 3, 6]);
        assert_eq!(tile_offsets(10, 4, TileSpec::Stride(4)).unwrap(), vec![0, 4, 6]);
        assert!(tile_offsets(10, 4, TileSpec::Stride(5)).is_err());
        assert!(tile_offsets(10, 4, TileSpec::Stride(0)).is_err());
    }

    #[test]
    fn merge_round_trip() {
        let data: Vec<f64> = (0..40 * 30).map(|i| (i as f64 * 0.37).sin()).collect();
        let img = Projection::from_data(40, 30, 0.2, ProjectionKind::Attenuation, data).unwrap();
        let tiles = tile_image(&img, 16, TileSpec::PerSide(4)).unwrap();
        assert_eq!(tiles.len(), 16);
        let back = merge_tiles(&tiles, 40, 30).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert_eq!(a, b);
        }
        assert!(matches!(merge_tiles(&tiles[1..], 40, 30), Err(DetectError::Coverage { row: 0, col: 0 })));
    }

    #[test]
    fn two_block_mean() {
        let mk = |v| Projection::filled(2, 2, 1.0, ProjectionKind::Probability, v);
        let tiles = [Tile { row: 0, col: 0, data: mk(0.2) }, Tile { row: 0, col: 1, data: mk(0.8) }];
        let m = merge_tiles(&tiles, 2, 3).unwrap();
        assert_eq!(m.get(0, 0), 0.2);
        assert!((m.get(1, 1) - 0.5).abs() < 1e-15);
        assert_eq!(m.get(1, 2), 0.8);
    }
}
