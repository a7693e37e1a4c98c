//! Switch-level transistor simulation: static CMOS expansion of gate
//! netlists and event-driven settling of the resulting FET networks.

mod expand;
mod sim;

pub use expand::{expand_to_transistors, fet_count_for, TransistorNet, CLOCK_NETS, GND, VDD};
pub use sim::{settle_switch_net, FetCond, SettleReport, SwitchSim, SwitchValue};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    N,
    P,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::N => "n",
            Polarity::P => "p",
        })
    }
}

/// Supply and threshold voltages, in volts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub vdd: f64,
    pub vth_n: f64,
    pub vth_p: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            vdd: 1.0,
            vth_n: 0.4,
            vth_p: 0.4,
        }
    }
}

impl DeviceParams {
    /// Checks `0 < vth < vdd` for both polarities.
    pub fn validate(&self) -> Result<(), SwitchError> {
        let ok = |v: f64| v > 0.0 && v < self.vdd;
        if self.vdd > 0.0 && ok(self.vth_n) && ok(self.vth_p) {
            Ok(())
        } else {
            Err(SwitchError::BadParams(*self))
        }
    }

    pub fn vth(&self, p: Polarity) -> f64 {
        match p {
            Polarity::N => self.vth_n,
            Polarity::P => self.vth_p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FetDevice {
    pub id: String,
    pub polarity: Polarity,
    pub gate: usize,
    pub source: usize,
    pub drain: usize,
    /// Threshold magnitude in volts.
    pub vth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchState {
    On,
    Off,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SwitchError {
    #[error("gate voltage {v} V outside 0..={vdd} V")]
    GateVoltage { v: f64, vdd: f64 },
    #[error("no fixpoint after {0} waves")]
    Oscillation(usize),
    #[error("invalid device parameters {0:?}")]
    BadParams(DeviceParams),
    #[error("unknown net `{0}`")]
    UnknownNet(String),
}

/// Threshold rule: an n-FET conducts iff `v_gate > vth`; a p-FET iff
/// `v_gate < vdd - vth`. Equality is off.
pub fn switch_state(f: &FetDevice, v_gate: f64, vdd: f64) -> Result<SwitchState, SwitchError> {
    if !(0.0..=vdd).contains(&v_gate) {
        return Err(SwitchError::GateVoltage { v: v_gate, vdd });
    }
    Ok(threshold(f.polarity, f.vth, v_gate, vdd))
}

fn threshold(p: Polarity, vth: f64, v_gate: f64, vdd: f64) -> SwitchState {
    let on = match p {
        Polarity::N => v_gate > vth,
        Polarity::P => v_gate < vdd - vth,
    };
    if on {
        SwitchState::On
    } else {
        SwitchState::Off
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fet(p: Polarity, vth: f64) -> FetDevice {
        FetDevice {
            id: "t".into(),
            polarity: p,
            gate: 0,
            source: 1,
            drain: 2,
            vth,
        }
    }

    #[test]
    fn threshold_rule() {
        let n = fet(Polarity::N, 0.4);
        assert_eq!(switch_state(&n, 1.0, 1.0).unwrap(), SwitchState::On);
        assert_eq!(switch_state(&n, 0.4, 1.0).unwrap(), SwitchState::Off);
        let p = fet(Polarity::P, 0.4);
        assert_eq!(switch_state(&p, 0.0, 1.0).unwrap(), SwitchState::On);
        assert_eq!(switch_state(&p, 0.6, 1.0).unwrap(), SwitchState::Off);
        assert!(switch_state(&n, 1.2, 1.0).is_err());
        assert!(switch_state(&n, -0.1, 1.0).is_err());
    }

    #[test]
    fn params_validated() {
        assert!(DeviceParams::default().validate().is_ok());
        let bad = DeviceParams {
            vth_n: 1.5,
            ..DeviceParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn single_step_transition(vth in 0.05f64..0.95, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let n = fet(Polarity::N, vth);
            let p = fet(Polarity::P, vth);
            let on = |f: &FetDevice, v| switch_state(f, v, 1.0).unwrap() == SwitchState::On;
            prop_assert!(!on(&n, lo) || on(&n, hi));
            prop_assert!(!on(&p, hi) || on(&p, lo));
            prop_assert_eq!(on(&n, lo), lo > vth);
        }
    }
}
