use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Resource fields of the multi-electrostatic system.
///
/// `LutmAl` models the additional LUT logic that only SLICEM provides
/// (distributed RAM and SHIFT modes); `Lutl` models LUT logic offered by
/// every slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FieldKind {
    #[serde(rename = "LUTL")]
    Lutl,
    #[serde(rename = "LUTM-AL")]
    LutmAl,
    #[serde(rename = "FF")]
    Ff,
    #[serde(rename = "CARRY")]
    Carry,
    #[serde(rename = "DSP")]
    Dsp,
    #[serde(rename = "BRAM")]
    Bram,
}

impl FieldKind {
    pub const COUNT: usize = 6;
    pub const ALL: [FieldKind; 6] = [
        FieldKind::Lutl,
        FieldKind::LutmAl,
        FieldKind::Ff,
        FieldKind::Carry,
        FieldKind::Dsp,
        FieldKind::Bram,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Lutl => "LUTL",
            FieldKind::LutmAl => "LUTM-AL",
            FieldKind::Ff => "FF",
            FieldKind::Carry => "CARRY",
            FieldKind::Dsp => "DSP",
            FieldKind::Bram => "BRAM",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FieldKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FieldKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown field `{s}`"))
    }
}

/// A fixed-size vector indexed by [`FieldKind`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerField<T>(pub [T; FieldKind::COUNT]);

impl<T: Copy> PerField<T> {
    pub fn splat(v: T) -> Self {
        PerField([v; FieldKind::COUNT])
    }

    pub fn iter(&self) -> impl Iterator<Item = (FieldKind, T)> + '_ {
        FieldKind::ALL.into_iter().map(move |k| (k, self.0[k.index()]))
    }

    pub fn map<U: Copy>(&self, mut f: impl FnMut(FieldKind, T) -> U) -> PerField<U> {
        let mut out = [f(FieldKind::Lutl, self.0[0]); FieldKind::COUNT];
        for k in FieldKind::ALL.into_iter().skip(1) {
            out[k.index()] = f(k, self.0[k.index()]);
        }
        PerField(out)
    }
}

impl<T: Default + Copy> Default for PerField<T> {
    fn default() -> Self {
        PerField([T::default(); FieldKind::COUNT])
    }
}

impl PerField<f64> {
    pub fn zeros() -> Self {
        PerField([0.0; FieldKind::COUNT])
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl<T> Index<FieldKind> for PerField<T> {
    type Output = T;
    fn index(&self, k: FieldKind) -> &T {
        &self.0[k.index()]
    }
}

impl<T> IndexMut<FieldKind> for PerField<T> {
    fn index_mut(&mut self, k: FieldKind) -> &mut T {
        &mut self.0[k.index()]
    }
}
