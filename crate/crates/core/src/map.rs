//! Per-cell relative density over the 4×4 tile.
//!
//! Cell `(row, col)` covers `x ∈ [col·pitch, (col+1)·pitch)` and
//! `y ∈ [row·pitch, (row+1)·pitch)`; rows index `y`, columns index `x`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::check_density;

pub const GRID: usize = 4;
pub const CELL_COUNT: usize = GRID * GRID;
pub const PITCH_MM: f64 = 37.5;
pub const TILE_SPAN_MM: f64 = GRID as f64 * PITCH_MM;

pub type Cell = (usize, usize);

pub fn cell_center(cell: Cell) -> (f64, f64) {
    ((cell.1 as f64 + 0.5) * PITCH_MM, (cell.0 as f64 + 0.5) * PITCH_MM)
}

/// Row-major channel index.
pub fn cell_index(cell: Cell) -> usize {
    cell.0 * GRID + cell.1
}

pub fn index_cell(index: usize) -> Cell {
    (index / GRID, index % GRID)
}

pub fn all_cells() -> impl Iterator<Item = Cell> {
    (0..GRID).flat_map(|r| (0..GRID).map(move |c| (r, c)))
}

pub fn on_tile(x: f64, y: f64) -> bool {
    (0.0..=TILE_SPAN_MM).contains(&x) && (0.0..=TILE_SPAN_MM).contains(&y)
}

/// Cell containing `(x, y)`; the far tile edges belong to the last cell.
pub fn cell_at(x: f64, y: f64) -> Option<Cell> {
    if !on_tile(x, y) {
        return None;
    }
    let idx = |v: f64| ((v / PITCH_MM).floor() as usize).min(GRID - 1);
    Some((idx(y), idx(x)))
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct StiffnessMap {
    pub densities: [[f64; GRID]; GRID],
}

impl StiffnessMap {
    pub fn uniform(density: f64) -> Self {
        Self {
            densities: [[density; GRID]; GRID],
        }
    }

    /// Columns `< boundary_col` get `upstream`, the rest `downstream`.
    pub fn split_columns(upstream: f64, downstream: f64, boundary_col: usize) -> Self {
        let mut densities = [[downstream; GRID]; GRID];
        for row in densities.iter_mut() {
            for cell in row.iter_mut().take(boundary_col) {
                *cell = upstream;
            }
        }
        Self { densities }
    }

    /// One density per column.
    pub fn banded_columns(columns: [f64; GRID]) -> Self {
        Self {
            densities: [columns; GRID],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != GRID || rows.iter().any(|r| r.len() != GRID) {
            let shape: Vec<usize> = rows.iter().map(Vec::len).collect();
            return Err(Error::Validation(vec![format!(
                "map must be {GRID}x{GRID}, got {} rows with lengths {shape:?}",
                rows.len()
            )]));
        }
        let mut densities = [[0.0; GRID]; GRID];
        for (dst, src) in densities.iter_mut().zip(rows) {
            dst.copy_from_slice(src);
        }
        Ok(Self { densities })
    }

    pub fn density(&self, cell: Cell) -> f64 {
        self.densities[cell.0][cell.1]
    }

    pub fn set(&mut self, cell: Cell, density: f64) {
        self.densities[cell.0][cell.1] = density;
    }

    pub fn density_at(&self, x: f64, y: f64) -> Option<f64> {
        cell_at(x, y).map(|c| self.density(c))
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.densities.iter().flatten().copied()
    }

    /// Every printability violation, one message per offending cell.
    pub fn violations(&self) -> Vec<String> {
        all_cells()
            .filter_map(|cell| {
                check_density(self.density(cell)).map(|v| format!("map cell {cell:?}: {v}"))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    /// Each distinct density forms a single 4-connected region.
    pub fn is_contiguous(&self) -> bool {
        let mut seen = [[false; GRID]; GRID];
        let mut regions_per_value: Vec<(f64, usize)> = Vec::new();
        for start in all_cells() {
            if seen[start.0][start.1] {
                continue;
            }
            let value = self.density(start);
            let mut stack = vec![start];
            seen[start.0][start.1] = true;
            while let Some((r, c)) = stack.pop() {
                let neighbours = [
                    (r.wrapping_sub(1), c),
                    (r + 1, c),
                    (r, c.wrapping_sub(1)),
                    (r, c + 1),
                ];
                for (nr, nc) in neighbours {
                    if nr < GRID && nc < GRID && !seen[nr][nc] && self.densities[nr][nc] == value {
                        seen[nr][nc] = true;
                        stack.push((nr, nc));
                    }
                }
            }
            match regions_per_value.iter_mut().find(|(v, _)| *v == value) {
                Some((_, n)) => *n += 1,
                None => regions_per_value.push((value, 1)),
            }
        }
        regions_per_value.iter().all(|(_, n)| *n == 1)
    }

    /// Row-major total order used for deterministic tie-breaking.
    pub fn lexicographic_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.values()
            .zip(other.values())
            .map(|(a, b)| a.total_cmp(&b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

impl TryFrom<Vec<Vec<f64>>> for StiffnessMap {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<StiffnessMap> for Vec<Vec<f64>> {
    fn from(map: StiffnessMap) -> Self {
        map.densities.iter().map(|r| r.to_vec()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_lookup() {
        assert_eq!(cell_at(0.0, 0.0), Some((0, 0)));
        assert_eq!(cell_at(37.5, 10.0), Some((0, 1)));
        assert_eq!(cell_at(150.0, 150.0), Some((3, 3)));
        assert_eq!(cell_at(150.1, 20.0), None);
        assert_eq!(cell_at(-0.1, 20.0), None);
        assert_eq!(cell_center((1, 2)), (93.75, 56.25));
        assert_eq!(index_cell(cell_index((2, 3))), (2, 3));
    }

    #[test]
    fn shape_validation() {
        let rows = vec![vec![0.1; 4]; 3];
        assert!(matches!(StiffnessMap::from_rows(&rows), Err(Error::Validation(_))));
        let json = "[[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1],[0.1,0.1,0.1,0.1]]";
        assert!(serde_json::from_str::<StiffnessMap>(json).is_err());
    }

    #[test]
    fn violations_are_exhaustive() {
        let mut map = StiffnessMap::uniform(0.10);
        map.set((0, 0), 0.05);
        map.set((3, 3), 0.40);
        let v = map.violations();
        assert_eq!(v.len(), 2);
        assert!(v[0].contains("7 %"));
    }

    #[test]
    fn contiguity() {
        assert!(StiffnessMap::uniform(0.1).is_contiguous());
        assert!(StiffnessMap::split_columns(0.2, 0.07, 2).is_contiguous());
        assert!(!StiffnessMap::banded_columns([0.07, 0.2, 0.07, 0.2]).is_contiguous());
        let mut checker = StiffnessMap::uniform(0.07);
        checker.set((0, 1), 0.2);
        checker.set((1, 0), 0.2);
        assert!(!checker.is_contiguous());
    }

    #[test]
    fn lexicographic_order() {
        let a = StiffnessMap::uniform(0.07);
        let mut b = a;
        b.set((3, 3), 0.10);
        assert_eq!(a.lexicographic_cmp(&b), std::cmp::Ordering::Less);
        assert_eq!(a.lexicographic_cmp(&a), std::cmp::Ordering::Equal);
    }
}
