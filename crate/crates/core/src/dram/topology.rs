use serde::{Deserialize, Serialize};

use super::timing::Ps;
use crate::error::{Error, Result};

/// Bytes moved by one column access (one cache line).
pub const LINE_BYTES: u64 = 64;
/// Bits a single chip contributes to one column access (8 bursts x 8 lanes).
pub const CHIP_BITS_PER_ACCESS: u32 = 64;

/// Physical organization of the memory system.
///
/// A subarray is one row of mats. Each row of a subarray spans every mat, and
/// every column access pulls 64 bits per chip spread evenly over the mats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topology {
    pub channels: u32,
    pub ranks_per_channel: u32,
    pub chips_per_rank: u32,
    pub banks_per_rank: u32,
    pub subarrays_per_bank: u32,
    pub rows_per_subarray: u32,
    pub mats_per_subarray_row: u32,
    pub cells_per_mat_side: u32,
    pub columns_per_row: u32,
    pub bus_width_bits: u32,
    pub burst_length: u32,
    pub clock_period_ps: Ps,
}

impl Default for Topology {
    /// 2 GB DDR3-1066 single channel of 2 Gb chips: 8 banks, 64 subarrays of 512 rows,
    /// 8 KB rank rows built from 16 mats per chip.
    fn default() -> Self {
        Topology {
            channels: 1,
            ranks_per_channel: 1,
            chips_per_rank: 8,
            banks_per_rank: 8,
            subarrays_per_bank: 64,
            rows_per_subarray: 512,
            mats_per_subarray_row: 16,
            cells_per_mat_side: 512,
            columns_per_row: 128,
            bus_width_bits: 64,
            burst_length: 8,
            clock_period_ps: Ps(1_875),
        }
    }
}

impl Topology {
    /// Single-bank toy chip with `mats` mats of `side`x`side` cells.
    pub fn toy(subarrays: u32, mats: u32, side: u32) -> Self {
        Topology {
            banks_per_rank: 1,
            subarrays_per_bank: subarrays,
            rows_per_subarray: side,
            mats_per_subarray_row: mats,
            cells_per_mat_side: side,
            columns_per_row: mats * side / CHIP_BITS_PER_ACCESS,
            ..Topology::default()
        }
    }

    pub fn with_clock(mut self, clock: Ps) -> Self {
        self.clock_period_ps = clock;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("channels", self.channels),
            ("ranks_per_channel", self.ranks_per_channel),
            ("chips_per_rank", self.chips_per_rank),
            ("banks_per_rank", self.banks_per_rank),
            ("subarrays_per_bank", self.subarrays_per_bank),
            ("rows_per_subarray", self.rows_per_subarray),
            ("mats_per_subarray_row", self.mats_per_subarray_row),
            ("cells_per_mat_side", self.cells_per_mat_side),
            ("columns_per_row", self.columns_per_row),
            ("bus_width_bits", self.bus_width_bits),
            ("burst_length", self.burst_length),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1")));
            }
        }
        if self.clock_period_ps.0 == 0 {
            return Err(Error::config("clock_period_ps must be > 0"));
        }
        if self.bus_width_bits != self.chips_per_rank * 8 {
            return Err(Error::config("bus_width_bits must equal chips_per_rank * 8"));
        }
        if self.burst_length as u64 * self.bus_width_bits as u64 != LINE_BYTES * 8 {
            return Err(Error::config("burst_length * bus_width_bits must be 512 bits"));
        }
        if self.cells_per_mat_side < 2 {
            return Err(Error::config("cells_per_mat_side must be >= 2"));
        }
        if self.rows_per_subarray % self.cells_per_mat_side != 0 {
            return Err(Error::config(
                "rows_per_subarray must be a multiple of cells_per_mat_side",
            ));
        }
        if CHIP_BITS_PER_ACCESS % self.mats_per_subarray_row != 0 {
            return Err(Error::config("mats_per_subarray_row must divide 64"));
        }
        let chip_row_bits = self.columns_per_row as u64 * CHIP_BITS_PER_ACCESS as u64;
        let mat_bits = self.mats_per_subarray_row as u64 * self.cells_per_mat_side as u64;
        if chip_row_bits != mat_bits {
            return Err(Error::config(format!(
                "columns_per_row * 64 ({chip_row_bits}) must equal mats * cells_per_mat_side ({mat_bits})"
            )));
        }
        Ok(())
    }

    pub fn rows_per_mat(&self) -> u32 {
        self.cells_per_mat_side
    }

    pub fn banks_total(&self) -> u64 {
        self.channels as u64 * self.ranks_per_channel as u64 * self.banks_per_rank as u64
    }

    pub fn rows_per_bank(&self) -> u64 {
        self.subarrays_per_bank as u64 * self.rows_per_subarray as u64
    }

    pub fn row_bytes(&self) -> u64 {
        self.columns_per_row as u64 * LINE_BYTES
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.banks_total() * self.rows_per_bank() * self.row_bytes()
    }

    /// Cells per chip per row.
    pub fn chip_row_bits(&self) -> u32 {
        self.columns_per_row * CHIP_BITS_PER_ACCESS
    }

    /// Chip-local data bits each mat contributes to one column access.
    pub fn bits_per_mat_per_access(&self) -> u32 {
        CHIP_BITS_PER_ACCESS / self.mats_per_subarray_row
    }

    /// Physical placement of data-out bit `bit` (burst * 8 + lane) of column
    /// `column` within a chip row: `(mat_index, col_in_mat)`.
    pub fn bit_location(&self, column: u32, bit: u32) -> (u32, u32) {
        let per_mat = self.bits_per_mat_per_access();
        let mat = bit / per_mat;
        let col_in_mat = column * per_mat + bit % per_mat;
        (mat, col_in_mat)
    }

    /// Inverse of [`Topology::bit_location`]: `(column, bit)`.
    pub fn access_of(&self, mat: u32, col_in_mat: u32) -> (u32, u32) {
        let per_mat = self.bits_per_mat_per_access();
        (col_in_mat / per_mat, mat * per_mat + col_in_mat % per_mat)
    }

    /// Total cells across every chip of the system.
    pub fn total_cells(&self) -> u64 {
        self.banks_total()
            * self.rows_per_bank()
            * self.chips_per_rank as u64
            * self.chip_row_bits() as u64
    }
}
