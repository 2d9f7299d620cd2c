use serde::{Deserialize, Serialize};
use std::fmt;

/// Interfaces of the film-edge cross-section where defects may sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Interface {
    /// Substrate–metal.
    SM,
    /// Inside the native oxide.
    Ox,
    /// Oxide–vacuum.
    OxV,
    /// Substrate–vacuum.
    SV,
    /// Josephson-junction tunnel barrier (no DC field).
    JJ,
}

impl Interface {
    /// The four field-bearing interfaces, in export order.
    pub const FIELD: [Interface; 4] = [Interface::SM, Interface::Ox, Interface::OxV, Interface::SV];

    /// Film interfaces where the applied fields are parallel.
    pub fn is_film(self) -> bool {
        matches!(self, Interface::SM | Interface::Ox | Interface::OxV)
    }

    pub fn name(self) -> &'static str {
        match self {
            Interface::SM => "SM",
            Interface::Ox => "Ox",
            Interface::OxV => "OxV",
            Interface::SV => "SV",
            Interface::JJ => "JJ",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Interface::SM => 0,
            Interface::Ox => 1,
            Interface::OxV => 2,
            Interface::SV => 3,
            Interface::JJ => 4,
        }
    }
}

impl fmt::Display for Interface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Interface {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SM" => Ok(Interface::SM),
            "Ox" => Ok(Interface::Ox),
            "OxV" => Ok(Interface::OxV),
            "SV" => Ok(Interface::SV),
            "JJ" => Ok(Interface::JJ),
            other => Err(format!("unknown interface '{other}'")),
        }
    }
}

/// Which source is driven in a field solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Excitation {
    Top,
    Bottom,
    Qubit,
}

impl Excitation {
    pub const ALL: [Excitation; 3] = [Excitation::Top, Excitation::Bottom, Excitation::Qubit];

    pub fn name(self) -> &'static str {
        match self {
            Excitation::Top => "top",
            Excitation::Bottom => "bottom",
            Excitation::Qubit => "qubit",
        }
    }
}
