use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// The mass-lumped tetrahedra this crate knows about, named `p{degree}n{nodes}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElementId {
    #[serde(rename = "p2n15")]
    P2n15,
    #[serde(rename = "p3n32")]
    P3n32,
    #[serde(rename = "p4n60")]
    P4n60,
    #[serde(rename = "p4n61")]
    P4n61,
    #[serde(rename = "p4n65")]
    P4n65,
}

impl ElementId {
    pub const ALL: [ElementId; 5] = [
        ElementId::P2n15,
        ElementId::P3n32,
        ElementId::P4n60,
        ElementId::P4n61,
        ElementId::P4n65,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ElementId::P2n15 => "p2n15",
            ElementId::P3n32 => "p3n32",
            ElementId::P4n60 => "p4n60",
            ElementId::P4n61 => "p4n61",
            ElementId::P4n65 => "p4n65",
        }
    }

    pub fn degree(self) -> u32 {
        match self {
            ElementId::P2n15 => 2,
            ElementId::P3n32 => 3,
            _ => 4,
        }
    }

    pub fn node_count(self) -> usize {
        match self {
            ElementId::P2n15 => 15,
            ElementId::P3n32 => 32,
            ElementId::P4n60 => 60,
            ElementId::P4n61 => 61,
            ElementId::P4n65 => 65,
        }
    }

    /// Order `2K` of the Dablain scheme paired with this element (`K = p`).
    pub fn default_time_order(self) -> u32 {
        self.degree()
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ElementId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim().to_ascii_lowercase();
        let t = t.strip_prefix('p').unwrap_or(&t);
        match t {
            "2n15" => Ok(ElementId::P2n15),
            "3n32" => Ok(ElementId::P3n32),
            "4n60" => Ok(ElementId::P4n60),
            "4n61" => Ok(ElementId::P4n61),
            "4n65" => Ok(ElementId::P4n65),
            _ => Err(Error::UnknownElement(s.to_string())),
        }
    }
}
