use crate::model::{Point, Region};

const MAX_CELLS_PER_AXIS: usize = 256;
const STRATA_PER_AXIS: usize = 8;

/// Uniform cell grid over the simulation domain with precomputed neighbour
/// lists. Cells are at least `min_side` wide so every interaction partner of a
/// particle lies in its own or an adjacent cell.
#[derive(Clone, Debug)]
pub(crate) struct CellGrid {
    dim: usize,
    lo: Point,
    width: Point,
    counts: [usize; 3],
    neighbors: Vec<Vec<u32>>,
}

impl CellGrid {
    /// `min_side = None` means no interactions: cells only stratify the
    /// death-event search.
    pub(crate) fn new(domain: &Region, min_side: Option<f64>, periodic: bool) -> Self {
        let dim = domain.dim;
        let mut counts = [1usize; 3];
        let mut width = [1.0; 3];
        for k in 0..dim {
            let len = domain.side(k);
            let n = match min_side {
                Some(s) if s > 0.0 => ((len / s).floor() as usize).clamp(1, MAX_CELLS_PER_AXIS),
                Some(_) => MAX_CELLS_PER_AXIS,
                None => STRATA_PER_AXIS,
            };
            counts[k] = n;
            width[k] = len / n as f64;
        }
        let total: usize = counts.iter().product();
        let mut neighbors = Vec::with_capacity(total);
        for c in 0..total {
            let idx = Self::unflatten(c, &counts);
            let mut list = Vec::with_capacity(27);
            if min_side.is_some() {
                for dx in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dz in -1i64..=1 {
                            let off = [dx, dy, dz];
                            let mut nb = [0usize; 3];
                            let mut valid = true;
                            for k in 0..3 {
                                let o = if k < dim { off[k] } else { 0 };
                                if k >= dim && off[k] != 0 {
                                    valid = false;
                                    break;
                                }
                                let n = counts[k] as i64;
                                let mut j = idx[k] as i64 + o;
                                if periodic {
                                    j = j.rem_euclid(n);
                                } else if j < 0 || j >= n {
                                    valid = false;
                                    break;
                                }
                                nb[k] = j as usize;
                            }
                            if valid {
                                list.push(Self::flatten(&nb, &counts) as u32);
                            }
                        }
                    }
                }
                list.sort_unstable();
                list.dedup();
            }
            neighbors.push(list);
        }
        CellGrid {
            dim,
            lo: domain.lo,
            width,
            counts,
            neighbors,
        }
    }

    fn unflatten(mut c: usize, counts: &[usize; 3]) -> [usize; 3] {
        let z = c % counts[2];
        c /= counts[2];
        let y = c % counts[1];
        let x = c / counts[1];
        [x, y, z]
    }

    fn flatten(idx: &[usize; 3], counts: &[usize; 3]) -> usize {
        (idx[0] * counts[1] + idx[1]) * counts[2] + idx[2]
    }

    pub(crate) fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub(crate) fn cell_of(&self, x: &Point) -> usize {
        let mut idx = [0usize; 3];
        for k in 0..self.dim {
            let raw = ((x[k] - self.lo[k]) / self.width[k]).floor();
            idx[k] = (raw.max(0.0) as usize).min(self.counts[k] - 1);
        }
        Self::flatten(&idx, &self.counts)
    }

    pub(crate) fn neighbors(&self, cell: usize) -> &[u32] {
        &self.neighbors[cell]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_neighbors_wrap_and_dedupe() {
        let r = Region::new(2, &[0.0, 0.0], &[10.0, 2.0]).unwrap();
        let g = CellGrid::new(&r, Some(1.0), true);
        assert_eq!(g.len(), 20);
        // two cells along y: wrapping must not double count
        assert_eq!(g.neighbors(0).len(), 6);
        let corner = g.cell_of(&[0.1, 0.1, 0.0]);
        assert!(g.neighbors(corner).contains(&(g.cell_of(&[9.9, 1.9, 0.0]) as u32)));
    }

    #[test]
    fn open_neighbors_stop_at_edges() {
        let r = Region::new(1, &[-1.0], &[9.0]).unwrap();
        let g = CellGrid::new(&r, Some(2.5), false);
        assert_eq!(g.len(), 4);
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(2), &[1, 2, 3]);
        assert_eq!(g.cell_of(&[8.99, 0.0, 0.0]), 3);
        assert_eq!(g.cell_of(&[9.0, 0.0, 0.0]), 3);
    }

    #[test]
    fn strata_without_interactions() {
        let r = Region::new(1, &[0.0], &[1.0]).unwrap();
        let g = CellGrid::new(&r, None, true);
        assert_eq!(g.len(), STRATA_PER_AXIS);
        assert!(g.neighbors(0).is_empty());
    }
}
