use crate::dram::Topology;

use super::CellCoords;

/// A rectangular selection of cells: every mat and column of the listed
/// chips, banks, subarrays and internal rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellScope {
    pub chips: Vec<u32>,
    pub banks: Vec<u32>,
    pub subarrays: Vec<u32>,
    /// Internal rows within each subarray.
    pub rows: Vec<u32>,
    mats: u32,
    side: u32,
}

impl CellScope {
    pub fn full(topo: &Topology) -> Self {
        Self::new(
            topo,
            (0..topo.chips_per_rank).collect(),
            (0..topo.banks_total() as u32).collect(),
            (0..topo.subarrays_per_bank).collect(),
            (0..topo.rows_per_subarray).collect(),
        )
    }

    pub fn new(topo: &Topology, chips: Vec<u32>, banks: Vec<u32>, subarrays: Vec<u32>, rows: Vec<u32>) -> Self {
        CellScope { chips, banks, subarrays, rows, mats: topo.mats_per_subarray_row, side: topo.cells_per_mat_side }
    }

    pub fn with_chips(mut self, chips: Vec<u32>) -> Self {
        self.chips = chips;
        self
    }

    pub fn with_banks(mut self, banks: Vec<u32>) -> Self {
        self.banks = banks;
        self
    }

    pub fn with_subarrays(mut self, subarrays: Vec<u32>) -> Self {
        self.subarrays = subarrays;
        self
    }

    pub fn with_rows(mut self, rows: Vec<u32>) -> Self {
        self.rows = rows;
        self
    }

    pub fn cells_per_row(&self) -> usize {
        (self.mats * self.side) as usize
    }

    /// Number of (chip, bank, subarray, row) rows covered.
    pub fn row_count(&self) -> usize {
        self.chips.len() * self.banks.len() * self.subarrays.len() * self.rows.len()
    }

    pub fn len(&self) -> usize {
        self.row_count() * self.cells_per_row()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The `i`-th row in chip, bank, subarray, row order:
    /// `(chip, bank, subarray, row)`.
    pub fn row_at(&self, i: usize) -> (u32, u32, u32, u32) {
        let r = i % self.rows.len();
        let i = i / self.rows.len();
        let s = i % self.subarrays.len();
        let i = i / self.subarrays.len();
        let b = i % self.banks.len();
        let c = i / self.banks.len();
        (self.chips[c], self.banks[b], self.subarrays[s], self.rows[r])
    }

    /// Cells of the `i`-th row, mat-major.
    pub fn row_cells(&self, i: usize) -> impl Iterator<Item = CellCoords> + '_ {
        let (chip, bank, subarray, row) = self.row_at(i);
        let side = self.side;
        (0..self.mats).flat_map(move |mat_index| {
            (0..side).map(move |col_in_mat| CellCoords { chip, bank, subarray, row, mat_index, col_in_mat })
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = CellCoords> + '_ {
        (0..self.row_count()).flat_map(move |i| self.row_cells(i))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_every_cell_once() {
        let t = Topology::toy(2, 4, 8);
        let s = CellScope::full(&t).with_chips(vec![0, 3]);
        let cells: Vec<_> = s.iter().collect();
        assert_eq!(cells.len(), s.len());
        assert_eq!(s.len(), 2 * 2 * 8 * 4 * 8);
        let mut uniq = cells.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), cells.len());
        assert!(cells.iter().all(|c| c.chip == 0 || c.chip == 3));
    }
}
