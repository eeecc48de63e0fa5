use serde::{Deserialize, Serialize};

use super::topology::{Topology, LINE_BYTES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Address {
    pub channel: u32,
    pub rank: u32,
    pub bank: u32,
    pub subarray: u32,
    /// Row within the subarray as issued on the command bus.
    pub row_external: u32,
    /// Row within the subarray after the chip's internal scrambling.
    pub row_internal: u32,
    pub column: u32,
    pub byte_offset: u32,
}

impl Address {
    /// Flat bank index across channels and ranks.
    pub fn bank_index(&self, topo: &Topology) -> usize {
        ((self.channel * topo.ranks_per_channel + self.rank) * topo.banks_per_rank + self.bank)
            as usize
    }

    /// Flat subarray index across the whole system.
    pub fn subarray_index(&self, topo: &Topology) -> usize {
        self.bank_index(topo) * topo.subarrays_per_bank as usize + self.subarray as usize
    }
}

/// Field order of the physical address mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingScheme {
    /// offset | column | channel | bank | rank | row | subarray (LSB first):
    /// a row's cache lines are contiguous.
    #[default]
    RowInterleaved,
    /// offset | channel | bank | column | rank | row | subarray: consecutive
    /// lines rotate over banks.
    LineInterleaved,
}

/// Invertible bit-level scrambling of the row-within-subarray address:
/// internal bit `i` is external bit `perm[i]`, then XOR `mask`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMap {
    pub perm: Vec<u8>,
    pub xor_mask: u32,
}

impl RowMap {
    pub fn identity(bits: u32) -> Self {
        RowMap { perm: (0..bits as u8).collect(), xor_mask: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.xor_mask == 0 && self.perm.iter().enumerate().all(|(i, &p)| i == p as usize)
    }

    pub fn bits(&self) -> u32 {
        self.perm.len() as u32
    }

    pub fn validate(&self, rows_per_subarray: u32) -> Result<()> {
        let bits = self.bits();
        if self.is_identity() && self.xor_mask == 0 && bits == 0 {
            return Ok(());
        }
        if !rows_per_subarray.is_power_of_two() || 1u32 << bits != rows_per_subarray {
            return Err(Error::config(format!(
                "row map over {bits} bits needs a power-of-two subarray of {} rows",
                1u64 << bits
            )));
        }
        let mut seen = vec![false; bits as usize];
        for &p in &self.perm {
            if p as u32 >= bits || std::mem::replace(&mut seen[p as usize], true) {
                return Err(Error::config("row map permutation is not a bijection"));
            }
        }
        if self.xor_mask >> bits != 0 {
            return Err(Error::config("row map xor mask wider than the row address"));
        }
        Ok(())
    }

    pub fn to_internal(&self, external: u32) -> u32 {
        if self.perm.is_empty() {
            return external;
        }
        let mut out = 0;
        for (i, &src) in self.perm.iter().enumerate() {
            out |= ((external >> src) & 1) << i;
        }
        out ^ self.xor_mask
    }

    pub fn to_external(&self, internal: u32) -> u32 {
        if self.perm.is_empty() {
            return internal;
        }
        let x = internal ^ self.xor_mask;
        let mut out = 0;
        for (i, &src) in self.perm.iter().enumerate() {
            out |= ((x >> i) & 1) << src;
        }
        out
    }
}

/// Decodes flat byte addresses into DRAM coordinates and back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AddressMap {
    topo: Topology,
    scheme: MappingScheme,
    row_map: RowMap,
}

impl AddressMap {
    pub fn new(topo: Topology, scheme: MappingScheme, row_map: Option<RowMap>) -> Result<Self> {
        topo.validate()?;
        let row_map = match row_map {
            Some(m) => {
                m.validate(topo.rows_per_subarray)?;
                m
            }
            None => RowMap { perm: Vec::new(), xor_mask: 0 },
        };
        Ok(AddressMap { topo, scheme, row_map })
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn row_map(&self) -> &RowMap {
        &self.row_map
    }

    pub fn row_internal(&self, row_external: u32) -> u32 {
        self.row_map.to_internal(row_external)
    }

    pub fn row_external(&self, row_internal: u32) -> u32 {
        self.row_map.to_external(row_internal)
    }

    /// Radices from least to most significant for the active scheme.
    fn radices(&self) -> [(Field, u64); 7] {
        let t = &self.topo;
        let col = (Field::Column, t.columns_per_row as u64);
        let ch = (Field::Channel, t.channels as u64);
        let bank = (Field::Bank, t.banks_per_rank as u64);
        let rank = (Field::Rank, t.ranks_per_channel as u64);
        let row = (Field::Row, t.rows_per_subarray as u64);
        let sa = (Field::Subarray, t.subarrays_per_bank as u64);
        let off = (Field::Offset, LINE_BYTES);
        match self.scheme {
            MappingScheme::RowInterleaved => [off, col, ch, bank, rank, row, sa],
            MappingScheme::LineInterleaved => [off, ch, bank, col, rank, row, sa],
        }
    }

    pub fn decode(&self, byte_addr: u64) -> Result<Address> {
        let capacity = self.topo.capacity_bytes();
        if byte_addr >= capacity {
            return Err(Error::Address { addr: byte_addr, capacity });
        }
        let mut a = Address::default();
        let mut rest = byte_addr;
        for (field, radix) in self.radices() {
            let v = (rest % radix) as u32;
            rest /= radix;
            match field {
                Field::Offset => a.byte_offset = v,
                Field::Column => a.column = v,
                Field::Channel => a.channel = v,
                Field::Bank => a.bank = v,
                Field::Rank => a.rank = v,
                Field::Row => a.row_external = v,
                Field::Subarray => a.subarray = v,
            }
        }
        a.row_internal = self.row_internal(a.row_external);
        Ok(a)
    }

    pub fn encode(&self, a: &Address) -> u64 {
        let mut out = 0u64;
        for (field, radix) in self.radices().iter().rev() {
            let v = match field {
                Field::Offset => a.byte_offset,
                Field::Column => a.column,
                Field::Channel => a.channel,
                Field::Bank => a.bank,
                Field::Rank => a.rank,
                Field::Row => a.row_external,
                Field::Subarray => a.subarray,
            } as u64;
            out = out * radix + v;
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Field {
    Offset,
    Column,
    Channel,
    Bank,
    Rank,
    Row,
    Subarray,
}
