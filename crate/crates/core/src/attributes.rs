//! The thirteen editable facial attributes and label vectors over them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

pub const NUM_ATTRIBUTES: usize = 13;

/// Attribute names in the fixed column order used everywhere in this crate.
pub const ATTRIBUTE_NAMES: [&str; NUM_ATTRIBUTES] = [
    "Bald",
    "Bangs",
    "Black_Hair",
    "Blond_Hair",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Eyeglasses",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "No_Beard",
    "Pale_Skin",
    "Young",
];

/// Mutually exclusive hair colours.
pub const HAIR_COLORS: [usize; 3] = [2, 3, 4];

pub fn attribute_index(name: &str) -> Result<usize> {
    ATTRIBUTE_NAMES
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| {
            config_err!(
                "unknown attribute `{name}`; valid names: {}",
                ATTRIBUTE_NAMES.join(", ")
            )
        })
}

/// A binary label over [`ATTRIBUTE_NAMES`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttributeVector(pub [bool; NUM_ATTRIBUTES]);

impl AttributeVector {
    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() != NUM_ATTRIBUTES {
            return Err(config_err!(
                "attribute vector needs {NUM_ATTRIBUTES} entries, got {}",
                bits.len()
            ));
        }
        let mut out = [false; NUM_ATTRIBUTES];
        for (o, &b) in out.iter_mut().zip(bits) {
            *o = match b {
                0 => false,
                1 => true,
                other => return Err(config_err!("attribute value must be 0 or 1, got {other}")),
            };
        }
        Ok(Self(out))
    }

    pub fn get(&self, index: usize) -> bool {
        self.0[index]
    }

    /// Set one attribute; turning a hair colour on turns the other two off.
    pub fn set(&mut self, index: usize, value: bool) {
        self.0[index] = value;
        if value && HAIR_COLORS.contains(&index) {
            for &h in HAIR_COLORS.iter().filter(|&&h| h != index) {
                self.0[h] = false;
            }
        }
    }

    pub fn set_named(&mut self, name: &str, value: bool) -> Result<()> {
        self.set(attribute_index(name)?, value);
        Ok(())
    }

    /// Copy with attribute `index` inverted (hair exclusivity applied).
    pub fn flipped(&self, index: usize) -> Self {
        let mut out = *self;
        out.set(index, !self.0[index]);
        out
    }

    pub fn to_f32(&self) -> [f32; NUM_ATTRIBUTES] {
        self.0.map(|b| if b { 1.0 } else { 0.0 })
    }

    /// Parse `"Name=0|1,Name=0|1"` edits onto this vector.
    pub fn apply_edits(&mut self, edits: &str) -> Result<()> {
        for part in edits.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, value) = part
                .split_once('=')
                .ok_or_else(|| config_err!("expected Name=0|1, got `{part}`"))?;
            let value = match value.trim() {
                "0" => false,
                "1" => true,
                v => return Err(config_err!("attribute value must be 0 or 1, got `{v}`")),
            };
            self.set_named(name.trim(), value)?;
        }
        Ok(())
    }
}

impl fmt::Display for AttributeVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}
