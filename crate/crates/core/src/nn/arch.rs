use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Number of network inputs (one per slice).
pub const INPUT_WIDTH: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub const ALL: [Activation; 3] = [Activation::Tanh, Activation::Sigmoid, Activation::Relu];

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative given the pre-activation `z` and its output `a`.
    /// The relu derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::invalid("activation", format!("unknown activation `{other}`"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        })
    }
}

/// Fully connected regression network: 3 inputs, the hidden widths, and one
/// linear output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkArch {
    hidden: Vec<usize>,
    activation: Activation,
}

impl NetworkArch {
    pub fn new(hidden: Vec<usize>, activation: Activation) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::invalid("architecture", "hidden widths must be positive"));
        }
        Ok(Self { hidden, activation })
    }

    /// Parses `20-10-5` (an en dash also works); `linear` means no hidden layer.
    pub fn parse(hidden: &str, activation: Activation) -> Result<Self> {
        Self::new(parse_hidden(hidden)?, activation)
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Layer widths from input to output.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![INPUT_WIDTH];
        w.extend(&self.hidden);
        w.push(1);
        w
    }

    pub fn param_count(&self) -> usize {
        self.layer_widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Hidden widths as `20-10-5`, or `linear`.
    pub fn hidden_label(&self) -> String {
        format_hidden(&self.hidden)
    }
}

impl fmt::Display for NetworkArch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.hidden_label(), self.activation)
    }
}

pub fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    let s = s.trim();
    if s.is_empty() || s == "linear" {
        return Ok(vec![]);
    }
    s.split(['-', '–'])
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Error::invalid("architecture", format!("bad layer width `{p}` in `{s}`")))
        })
        .collect()
}

pub fn format_hidden(hidden: &[usize]) -> String {
    if hidden.is_empty() {
        "linear".into()
    } else {
        hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
    }
}

/// The ten hidden-layer layouts searched by the default grid.
pub fn default_hidden_layouts() -> Vec<Vec<usize>> {
    vec![
        vec![5],
        vec![10],
        vec![20],
        vec![40],
        vec![10, 5],
        vec![20, 10],
        vec![40, 20],
        vec![20, 10, 5],
        vec![40, 20, 10],
        vec![40, 20, 10, 5],
    ]
}
