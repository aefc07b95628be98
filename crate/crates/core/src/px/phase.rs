//! Positive phase `{u > 0}` and its discrete free boundary.

use crate::px::grid::GridFunction;

/// An interface crossing on the lattice edge `(positive, other)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeBoundaryPoint {
    pub x: Vec<f64>,
    pub positive: usize,
    pub other: usize,
}

#[derive(Clone, Debug)]
pub struct PositivePhase<'a> {
    pub owner: &'a GridFunction,
    pub mask: Vec<bool>,
    pub free_boundary: Vec<FreeBoundaryPoint>,
}

impl PositivePhase<'_> {
    pub fn positive_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Distance from `x` to the nearest extracted free boundary point.
    pub fn distance_to_free_boundary(&self, x: &[f64]) -> Option<f64> {
        self.free_boundary
            .iter()
            .map(|p| p.x.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .min_by(f64::total_cmp)
    }

    /// Nodes of the positive phase that touch a free boundary edge.
    pub fn boundary_band(&self) -> Vec<usize> {
        let mut band: Vec<usize> = self.free_boundary.iter().map(|p| p.positive).collect();
        band.sort_unstable();
        band.dedup();
        band
    }
}

/// Mask `u > 0` plus linear-interpolation crossings on every lattice edge
/// joining a positive and a non-positive node.
pub fn extract_positive_phase(u: &GridFunction) -> PositivePhase<'_> {
    let grid = u.grid();
    let v = u.values();
    let mask: Vec<bool> = v.iter().map(|x| *x > 0.0).collect();
    let mut free_boundary = Vec::new();
    let mut xi = vec![0.0; grid.dim()];
    let mut xj = vec![0.0; grid.dim()];
    for i in 0..grid.len() {
        for d in 0..grid.dim() {
            let Some(j) = grid.neighbor(i, d, true) else { continue };
            if mask[i] == mask[j] {
                continue;
            }
            let (pos, neg) = if mask[i] { (i, j) } else { (j, i) };
            let t = v[pos] / (v[pos] - v[neg]);
            grid.point_into(pos, &mut xi);
            grid.point_into(neg, &mut xj);
            let x = xi.iter().zip(&xj).map(|(a, b)| a + t * (b - a)).collect();
            free_boundary.push(FreeBoundaryPoint { x, positive: pos, other: neg });
        }
    }
    PositivePhase { owner: u, mask, free_boundary }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::px::grid::Grid;

    #[test]
    fn half_space_interface_is_flat() {
        let g = Grid::cube(2, -1.0, 1.0, 33).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| x[1].max(0.0));
        let ph = extract_positive_phase(&u);
        assert!(!ph.free_boundary.is_empty());
        let h = g.h_max();
        for p in &ph.free_boundary {
            assert!(p.x[1].abs() <= h);
        }
        for (i, m) in ph.mask.iter().enumerate() {
            assert_eq!(*m, u.at(i) > 0.0);
        }
    }

    #[test]
    fn constant_positive_has_no_interface() {
        let g = Grid::cube(3, -1.0, 1.0, 4).unwrap();
        let u = GridFunction::constant(&g, "u", 1.0);
        let ph = extract_positive_phase(&u);
        assert!(ph.free_boundary.is_empty());
        assert_eq!(ph.positive_count(), g.len());
    }

    #[test]
    fn tilted_line_is_recovered() {
        let g = Grid::cube(2, -1.0, 1.0, 64).unwrap();
        let u = GridFunction::from_fn(&g, "u", |x| (0.6 * x[0] + 0.8 * x[1] - 0.3).max(0.0));
        let ph = extract_positive_phase(&u);
        let h = g.h_max();
        assert!(ph.free_boundary.len() > 50);
        for p in &ph.free_boundary {
            assert!((0.6 * p.x[0] + 0.8 * p.x[1] - 0.3).abs() <= h);
            // crossing lies on the edge between its endpoints
            let a = g.point(p.positive);
            let b = g.point(p.other);
            for d in 0..2 {
                assert!(p.x[d] >= a[d].min(b[d]) - 1e-15 && p.x[d] <= a[d].max(b[d]) + 1e-15);
            }
        }
    }
}
