use std::ops::Range;

/// Edge length of a square screen tile, in pixels.
pub const TILE_SIZE: usize = 16;

/// Per-tile lists of overlapping primitives.
///
/// Built by emitting one `(tile, gaussian)` key per tile a primitive's cull
/// box overlaps, sorting the keys, and recording the contiguous run of each
/// tile. Within a run, primitive ids ascend.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileIndex {
    width: usize,
    height: usize,
    tiles_x: usize,
    tiles_y: usize,
    keys: Vec<(u32, u32)>,
    ranges: Vec<Range<usize>>,
}

impl TileIndex {
    /// `centers[n]` and `extents[n]` (half-widths along x and y) give
    /// primitive `n`'s cull box; `None` marks a primitive that touches no
    /// pixel.
    pub(crate) fn build(
        width: usize,
        height: usize,
        centers: &[[f64; 2]],
        extents: &[Option<[f64; 2]>],
    ) -> Self {
        let tiles_x = width.div_ceil(TILE_SIZE);
        let tiles_y = height.div_ceil(TILE_SIZE);

        let mut keys = Vec::new();
        for (id, (center, extent)) in centers.iter().zip(extents).enumerate() {
            let Some([rx, ry]) = *extent else { continue };
            let Some((x0, x1)) = pixel_span(center[0], rx, width) else {
                continue;
            };
            let Some((y0, y1)) = pixel_span(center[1], ry, height) else {
                continue;
            };
            for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
                for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                    keys.push(((ty * tiles_x + tx) as u32, id as u32));
                }
            }
        }
        keys.sort_unstable();

        let mut ranges = vec![0..0; tiles_x * tiles_y];
        let mut start = 0;
        while start < keys.len() {
            let tile = keys[start].0;
            let mut end = start + 1;
            while end < keys.len() && keys[end].0 == tile {
                end += 1;
            }
            ranges[tile as usize] = start..end;
            start = end;
        }
        // Empty tiles get an empty range positioned at the next occupied run so
        // the ranges tile the key list in order.
        let mut cursor = keys.len();
        for range in ranges.iter_mut().rev() {
            if range.start == range.end {
                *range = cursor..cursor;
            } else {
                cursor = range.start;
            }
        }

        Self {
            width,
            height,
            tiles_x,
            tiles_y,
            keys,
            ranges,
        }
    }

    pub fn tiles_x(&self) -> usize {
        self.tiles_x
    }

    pub fn tiles_y(&self) -> usize {
        self.tiles_y
    }

    pub fn tile_count(&self) -> usize {
        self.tiles_x * self.tiles_y
    }

    /// Sorted `(tile_id, gaussian_id)` keys.
    pub fn keys(&self) -> &[(u32, u32)] {
        &self.keys
    }

    pub fn range(&self, tile: usize) -> Range<usize> {
        self.ranges[tile].clone()
    }

    /// Primitive ids assigned to `tile`, ascending.
    pub fn gaussians(&self, tile: usize) -> impl Iterator<Item = usize> + '_ {
        self.keys[self.range(tile)].iter().map(|&(_, g)| g as usize)
    }

    /// Pixel rectangle `(x0..x1, y0..y1)` covered by `tile`.
    pub fn pixels(&self, tile: usize) -> (Range<usize>, Range<usize>) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * TILE_SIZE;
        let y0 = ty * TILE_SIZE;
        (
            x0..(x0 + TILE_SIZE).min(self.width),
            y0..(y0 + TILE_SIZE).min(self.height),
        )
    }
}

/// Inclusive pixel index span `[ceil(c - r), floor(c + r)]` clipped to the
/// canvas, or `None` when it misses the canvas.
pub(super) fn pixel_span(center: f64, radius: f64, extent: usize) -> Option<(usize, usize)> {
    let lo = (center - radius).ceil().max(0.0);
    let hi = (center + radius).floor().min(extent as f64 - 1.0);
    if !(lo <= hi) {
        return None;
    }
    Some((lo as usize, hi as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_tile_gaussian() {
        let index = TileIndex::build(64, 64, &[[8.0, 8.0]], &[Some([3.0, 3.0])]);
        assert_eq!(index.keys(), &[(0, 0)]);
        assert_eq!(index.range(0), 0..1);
        for t in 1..index.tile_count() {
            assert!(index.range(t).is_empty());
        }
    }

    #[test]
    fn gaussian_on_tile_corner_spans_four_tiles() {
        let index = TileIndex::build(64, 64, &[[16.0, 16.0]], &[Some([4.0, 4.0])]);
        let tiles: Vec<u32> = index.keys().iter().map(|k| k.0).collect();
        assert_eq!(tiles, vec![0, 1, 4, 5]);
    }

    #[test]
    fn elongated_box_stays_in_its_tile_row() {
        let index = TileIndex::build(64, 64, &[[24.0, 8.0]], &[Some([20.0, 3.0])]);
        let tiles: Vec<u32> = index.keys().iter().map(|k| k.0).collect();
        assert_eq!(tiles, vec![0, 1, 2]);
    }

    #[test]
    fn culled_and_offscreen_gaussians_emit_nothing() {
        let index =
            TileIndex::build(32, 32, &[[5.0, 5.0], [-40.0, 5.0]], &[None, Some([3.0, 3.0])]);
        assert!(index.keys().is_empty());
    }

    #[test]
    fn ranges_partition_keys() {
        let centers = [[3.0, 3.0], [20.0, 9.0], [30.0, 30.0], [17.0, 17.0]];
        let extents = [Some([5.0, 1.0]), Some([12.0, 3.0]), Some([2.0, 2.0]), Some([30.0, 9.0])];
        let index = TileIndex::build(40, 33, &centers, &extents);
        let mut next = 0;
        for t in 0..index.tile_count() {
            let r = index.range(t);
            assert_eq!(r.start, next);
            next = r.end;
            let ids: Vec<usize> = index.gaussians(t).collect();
            assert!(ids.windows(2).all(|w| w[0] < w[1]));
        }
        assert_eq!(next, index.keys().len());
    }
}
