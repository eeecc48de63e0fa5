//! Named chip models with calibrated variation parameters.

use serde::{Deserialize, Serialize};

use crate::ava::CorrectionSetup;
use crate::dram::{Param, Ps, TimingParams, Topology};
use crate::variation::{ChipModel, Op, Stress, VariationParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipPreset {
    /// Default 2 GB rank, default variation parameters.
    Default,
    /// Typical module: safe refresh 200/152 ms, read path reducible by 32%
    /// at 55 degC.
    Reference,
    /// Module whose test-region profile at 55 degC cuts the read path by 36%
    /// and the write path by 59%.
    Ava,
    /// Errors concentrated in the slowest-precharge mats, hence in the same
    /// burst positions of every chip.
    Clustered,
    /// 1 bank, 4 mats of 512x512 cells, no process or retention noise.
    SigmaZeroToy,
    /// 32-row mats, 16 mats, 8 columns; for row-mapping estimation.
    RowMapToy,
}

impl ChipPreset {
    pub const ALL: [ChipPreset; 6] = [
        ChipPreset::Default,
        ChipPreset::Reference,
        ChipPreset::Ava,
        ChipPreset::Clustered,
        ChipPreset::SigmaZeroToy,
        ChipPreset::RowMapToy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChipPreset::Default => "default",
            ChipPreset::Reference => "reference",
            ChipPreset::Ava => "ava",
            ChipPreset::Clustered => "clustered",
            ChipPreset::SigmaZeroToy => "sigma_zero_toy",
            ChipPreset::RowMapToy => "row_map_toy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }

    pub fn topology(self) -> Topology {
        let ddr3_1600 = Ps(1_250);
        match self {
            ChipPreset::Default => Topology::default(),
            ChipPreset::Reference => Topology {
                subarrays_per_bank: 2,
                rows_per_subarray: 128,
                mats_per_subarray_row: 4,
                cells_per_mat_side: 128,
                columns_per_row: 8,
                clock_period_ps: ddr3_1600,
                ..Topology::default()
            },
            ChipPreset::Ava | ChipPreset::Clustered => {
                Topology { subarrays_per_bank: 8, clock_period_ps: ddr3_1600, ..Topology::default() }
            }
            ChipPreset::SigmaZeroToy => Topology::toy(1, 4, 512).with_clock(ddr3_1600),
            ChipPreset::RowMapToy => Topology::toy(8, 16, 32).with_clock(ddr3_1600),
        }
    }

    /// Datasheet timings the chip is sold against.
    pub fn standard(self) -> TimingParams {
        match self {
            ChipPreset::Default => TimingParams::ddr3_1066(),
            _ => TimingParams::ddr3_1600(),
        }
    }

    /// Requirement of a zero-distance cell at 55 degC with full charge.
    pub fn nominal(self) -> TimingParams {
        let ns = Ps::from_ns;
        let (trcd, tras, twr, trp) = match self {
            ChipPreset::Default | ChipPreset::Clustered => (6.5, 15.0, 7.0, 7.0),
            ChipPreset::Reference => (6.5, 15.0, 7.38, 6.5),
            ChipPreset::Ava => (3.0, 18.5, 2.4, 2.5),
            ChipPreset::SigmaZeroToy => (7.0, 18.0, 6.0, 7.0),
            ChipPreset::RowMapToy => (6.5, 15.0, 7.0, 7.0),
        };
        self.standard().with_core(ns(trcd), ns(tras), ns(twr), ns(trp))
    }

    /// Seed the calibration was done with.
    pub fn calibrated_seed(self) -> u64 {
        1
    }

    pub fn params(self, seed: u64) -> VariationParams {
        // Shared by the calibrated module presets.
        let module = VariationParams {
            lambda_temp: 0.01,
            retention_median_ms: 2000.0,
            retention_sigma: 0.3,
            gamma_charge: 0.41,
            c0: 0.0,
            seed,
            ..VariationParams::default()
        };
        match self {
            ChipPreset::Default => VariationParams { seed, ..VariationParams::default() },
            ChipPreset::Reference => module,
            ChipPreset::Ava => VariationParams { sigma_process: 0.02, ..module },
            ChipPreset::Clustered => VariationParams { alpha_ps: 250.0, beta_ps: 25.0, sigma_process: 0.03, ..module },
            ChipPreset::SigmaZeroToy => VariationParams {
                sigma_process: 0.0,
                retention_sigma: 0.0,
                retention_median_ms: 4000.0,
                alpha_ps: 200.0,
                beta_ps: 20.0,
                ..module
            },
            ChipPreset::RowMapToy => VariationParams { sigma_process: 0.02, kappa_wordline: 0.0, ..module },
        }
    }

    pub fn chip(self) -> ChipModel {
        self.chip_with_seed(self.calibrated_seed())
    }

    pub fn chip_with_seed(self, seed: u64) -> ChipModel {
        ChipModel::new(self.topology(), self.params(seed), self.nominal(), self.standard()).expect("preset is valid")
    }
}

/// Operating point of the clustered preset at which shuffling is evaluated:
/// standard timings with tRP at 11 ns, 55 degC, 64 ms, reads.
pub fn clustered_setup(lines: u64, seed: u64) -> CorrectionSetup {
    let std = ChipPreset::Clustered.standard();
    CorrectionSetup {
        timings: std.with(Param::Trp, Ps(11_000)),
        temp_c: 55.0,
        refresh_ms: 64.0,
        stress: Stress::new(Op::Read),
        lines,
        seed,
    }
}
