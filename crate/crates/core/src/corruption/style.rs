use std::fmt;

use serde::{Deserialize, Serialize};

use super::CorruptionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Weather,
    Lighting,
    Camera,
    Occlusion,
}

impl Family {
    /// Order used by style-weight vectors.
    pub const ALL: [Family; 4] = [
        Family::Weather,
        Family::Lighting,
        Family::Camera,
        Family::Occlusion,
    ];

    pub fn subtypes(self) -> &'static [Subtype] {
        use Subtype::*;
        match self {
            Family::Weather => &[Fog, Rain, Snow],
            Family::Lighting => &[Dusk, Night, Overexposure, Shadow],
            Family::Camera => &[Translation, Zoom, Rotation],
            Family::Occlusion => &[Static, Dynamic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subtype {
    Fog,
    Rain,
    Snow,
    Dusk,
    Night,
    Overexposure,
    Shadow,
    Translation,
    Zoom,
    Rotation,
    Static,
    Dynamic,
}

/// A perturbation family together with one of its subtypes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawStyle", into = "RawStyle")]
pub struct PerturbationStyle {
    family: Family,
    subtype: Subtype,
}

#[derive(Serialize, Deserialize)]
struct RawStyle {
    family: Family,
    subtype: Subtype,
}

impl TryFrom<RawStyle> for PerturbationStyle {
    type Error = CorruptionError;

    fn try_from(raw: RawStyle) -> Result<Self, Self::Error> {
        PerturbationStyle::new(raw.family, raw.subtype)
    }
}

impl From<PerturbationStyle> for RawStyle {
    fn from(s: PerturbationStyle) -> Self {
        RawStyle {
            family: s.family,
            subtype: s.subtype,
        }
    }
}

impl PerturbationStyle {
    pub fn new(family: Family, subtype: Subtype) -> Result<Self, CorruptionError> {
        if family.subtypes().contains(&subtype) {
            Ok(Self { family, subtype })
        } else {
            Err(CorruptionError::UnknownSubtype { family, subtype })
        }
    }

    /// All twelve styles in family order.
    pub fn all() -> impl Iterator<Item = PerturbationStyle> {
        Family::ALL.into_iter().flat_map(|family| {
            family
                .subtypes()
                .iter()
                .map(move |&subtype| PerturbationStyle { family, subtype })
        })
    }

    pub fn family(self) -> Family {
        self.family
    }

    pub fn subtype(self) -> Subtype {
        self.subtype
    }

    /// Stable code used for RNG stream splitting.
    pub fn code(self) -> u8 {
        self.subtype as u8
    }

    /// Dynamic styles move their binary map between frames; the rest keep it
    /// frame-invariant.
    pub fn is_dynamic(self) -> bool {
        matches!(
            self.subtype,
            Subtype::Rain
                | Subtype::Snow
                | Subtype::Translation
                | Subtype::Zoom
                | Subtype::Rotation
                | Subtype::Dynamic
        )
    }

    /// Styles whose binary map covers the whole frame and only vary `C`.
    pub fn is_full_field(self) -> bool {
        matches!(self.subtype, Subtype::Fog | Subtype::Dusk | Subtype::Night)
    }
}

impl fmt::Display for PerturbationStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let family = serde_json::to_value(self.family).expect("enum serializes");
        let subtype = serde_json::to_value(self.subtype).expect("enum serializes");
        write!(
            f,
            "{}/{}",
            family.as_str().unwrap_or_default(),
            subtype.as_str().unwrap_or_default()
        )
    }
}
