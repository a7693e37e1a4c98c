use super::expand::TransistorNet;
use super::{threshold, FetDevice, SwitchError, SwitchState};
use crate::gates::LogicValue;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum SwitchValue {
    Zero,
    One,
    /// Contention or unknown drive.
    X,
    /// Floating.
    Z,
}

impl SwitchValue {
    pub fn to_logic(self) -> LogicValue {
        match self {
            SwitchValue::Zero => LogicValue::Zero,
            SwitchValue::One => LogicValue::One,
            _ => LogicValue::X,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            SwitchValue::Zero => '0',
            SwitchValue::One => '1',
            SwitchValue::X => 'X',
            SwitchValue::Z => 'Z',
        }
    }
}

impl From<LogicValue> for SwitchValue {
    fn from(v: LogicValue) -> Self {
        match v {
            LogicValue::Zero => SwitchValue::Zero,
            LogicValue::One => SwitchValue::One,
            LogicValue::X => SwitchValue::X,
        }
    }
}

/// Conduction of a FET given its gate net's value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FetCond {
    Off,
    On,
    Unknown,
}

impl FetCond {
    pub fn name(self) -> &'static str {
        match self {
            FetCond::Off => "OFF",
            FetCond::On => "ON",
            FetCond::Unknown => "UNK",
        }
    }
}

/// Compressed adjacency lists.
#[derive(Debug, Clone, Default)]
struct Csr {
    start: Vec<u32>,
    items: Vec<u32>,
}

impl Csr {
    fn build(n: usize, pairs: impl Iterator<Item = (usize, usize)> + Clone) -> Self {
        let mut start = vec![0u32; n + 1];
        for (k, _) in pairs.clone() {
            start[k + 1] += 1;
        }
        for i in 0..n {
            start[i + 1] += start[i];
        }
        let mut fill = start.clone();
        let mut items = vec![0u32; start[n] as usize];
        for (k, v) in pairs {
            items[fill[k] as usize] = v as u32;
            fill[k] += 1;
        }
        Self { start, items }
    }

    fn get(&self, k: usize) -> &[u32] {
        &self.items[self.start[k] as usize..self.start[k + 1] as usize]
    }
}

const NO_GROUP: u32 = u32::MAX;

/// Event-driven switch-level simulator. Nets are partitioned into
/// channel-connected groups; a group is re-resolved whenever one of its
/// FETs changes conduction or a neighbouring source changes value.
#[derive(Debug, Clone)]
pub struct SwitchSim {
    net: Arc<TransistorNet>,
    is_source: Vec<bool>,
    vals: Vec<SwitchValue>,
    cond: Vec<FetCond>,
    cond_high: Vec<FetCond>,
    cond_low: Vec<FetCond>,
    gated: Csr,
    channel: Csr,
    net_group: Vec<u32>,
    local: Vec<u32>,
    group_nets: Csr,
    group_fets: Csr,
    dirty: Vec<bool>,
    queue: Vec<u32>,
    changed: Vec<u32>,
    scratch: Vec<[bool; 4]>,
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        parent[x as usize] = parent[parent[x as usize] as usize];
        x = parent[x as usize];
    }
    x
}

impl SwitchSim {
    /// Power-on state: rails driven, everything else unknown.
    pub fn new(net: Arc<TransistorNet>) -> Self {
        let n = net.net_count();
        let mut is_source = vec![false; n];
        is_source[TransistorNet::VDD_NET] = true;
        is_source[TransistorNet::GND_NET] = true;
        for &i in &net.inputs {
            is_source[i] = true;
        }
        let vdd = net.params.vdd;
        let conduct = |f: &FetDevice, v: f64| match threshold(f.polarity, f.vth, v, vdd) {
            SwitchState::On => FetCond::On,
            SwitchState::Off => FetCond::Off,
        };
        let cond_high: Vec<FetCond> = net.fets.iter().map(|f| conduct(f, vdd)).collect();
        let cond_low: Vec<FetCond> = net.fets.iter().map(|f| conduct(f, 0.0)).collect();

        let gated = Csr::build(n, net.fets.iter().enumerate().map(|(i, f)| (f.gate, i)));
        let channel = Csr::build(
            n,
            net.fets
                .iter()
                .enumerate()
                .flat_map(|(i, f)| [(f.source, i), (f.drain, i)]),
        );

        let mut parent: Vec<u32> = (0..n as u32).collect();
        for f in &net.fets {
            if !is_source[f.source] && !is_source[f.drain] {
                let (a, b) = (find(&mut parent, f.source as u32), find(&mut parent, f.drain as u32));
                if a != b {
                    parent[a.max(b) as usize] = a.min(b);
                }
            }
        }
        let mut net_group = vec![NO_GROUP; n];
        let mut local = vec![0u32; n];
        let mut root_group: HashMap<u32, u32> = HashMap::new();
        let mut sizes: Vec<u32> = Vec::new();
        for i in 0..n {
            if is_source[i] {
                continue;
            }
            let r = find(&mut parent, i as u32);
            let g = *root_group.entry(r).or_insert_with(|| {
                sizes.push(0);
                sizes.len() as u32 - 1
            });
            net_group[i] = g;
            local[i] = sizes[g as usize];
            sizes[g as usize] += 1;
        }
        let groups = sizes.len();
        let group_nets = Csr::build(
            groups,
            (0..n).filter(|&i| net_group[i] != NO_GROUP).map(|i| (net_group[i] as usize, i)),
        );
        let group_fets = Csr::build(
            groups,
            net.fets.iter().enumerate().flat_map(|(i, f)| {
                let gs = net_group[f.source];
                let gd = net_group[f.drain];
                let a = (gs != NO_GROUP).then_some((gs as usize, i));
                let b = (gd != NO_GROUP && gd != gs).then_some((gd as usize, i));
                a.into_iter().chain(b)
            }),
        );
        let max_group = sizes.iter().copied().max().unwrap_or(0) as usize;

        let mut vals = vec![SwitchValue::X; n];
        vals[TransistorNet::VDD_NET] = SwitchValue::One;
        vals[TransistorNet::GND_NET] = SwitchValue::Zero;
        let mut sim = Self {
            net,
            is_source,
            vals,
            cond: Vec::new(),
            cond_high,
            cond_low,
            gated,
            channel,
            net_group,
            local,
            group_nets,
            group_fets,
            dirty: vec![true; groups],
            queue: (0..groups as u32).collect(),
            changed: Vec::new(),
            scratch: vec![[false; 4]; max_group],
        };
        sim.cond = (0..sim.net.fets.len()).map(|f| sim.cond_for(f)).collect();
        sim
    }

    pub fn transistor_net(&self) -> &Arc<TransistorNet> {
        &self.net
    }

    fn cond_for(&self, f: usize) -> FetCond {
        match self.vals[self.net.fets[f].gate] {
            SwitchValue::One => self.cond_high[f],
            SwitchValue::Zero => self.cond_low[f],
            _ if self.cond_high[f] == self.cond_low[f] => self.cond_high[f],
            _ => FetCond::Unknown,
        }
    }

    pub fn value(&self, net: usize) -> SwitchValue {
        self.vals[net]
    }

    pub fn values(&self) -> &[SwitchValue] {
        &self.vals
    }

    pub fn conditions(&self) -> &[FetCond] {
        &self.cond
    }

    /// Drives a primary input. Takes effect at the next `settle`.
    pub fn set_input(&mut self, net: usize, v: LogicValue) {
        debug_assert!(self.is_source[net] && !self.net.is_rail(net));
        let v = SwitchValue::from(v);
        if self.vals[net] != v {
            self.vals[net] = v;
            self.changed.push(net as u32);
            for k in 0..self.channel.get(net).len() {
                let f = self.channel.get(net)[k] as usize;
                let (s, d) = (self.net.fets[f].source, self.net.fets[f].drain);
                self.mark(s);
                self.mark(d);
            }
        }
    }

    fn mark(&mut self, net: usize) {
        let g = self.net_group[net];
        if g != NO_GROUP && !self.dirty[g as usize] {
            self.dirty[g as usize] = true;
            self.queue.push(g);
        }
    }

    /// Propagates until no net changes, reporting every FET conduction
    /// change to `on_fet`. Returns the number of waves taken.
    pub fn settle(&mut self, on_fet: &mut dyn FnMut(usize, FetCond)) -> Result<usize, SwitchError> {
        let cap = (4 * self.net.fets.len()).max(16);
        let mut waves = 0;
        loop {
            for i in 0..self.changed.len() {
                let n = self.changed[i] as usize;
                for k in 0..self.gated.get(n).len() {
                    let f = self.gated.get(n)[k] as usize;
                    let c = self.cond_for(f);
                    if c != self.cond[f] {
                        self.cond[f] = c;
                        on_fet(f, c);
                        let (s, d) = (self.net.fets[f].source, self.net.fets[f].drain);
                        self.mark(s);
                        self.mark(d);
                    }
                }
            }
            self.changed.clear();
            if self.queue.is_empty() {
                return Ok(waves);
            }
            waves += 1;
            if waves > cap {
                return Err(SwitchError::Oscillation(waves));
            }
            let mut wave = std::mem::take(&mut self.queue);
            wave.sort_unstable();
            for &g in &wave {
                self.dirty[g as usize] = false;
            }
            for &g in &wave {
                self.resolve(g as usize);
            }
            wave.clear();
            if self.queue.is_empty() {
                self.queue = wave;
            }
        }
    }

    fn resolve(&mut self, g: usize) {
        const D1: usize = 0;
        const P1: usize = 1;
        const D0: usize = 2;
        const P0: usize = 3;
        let m = self.group_nets.get(g).len();
        for s in &mut self.scratch[..m] {
            *s = [false; 4];
        }
        let fets = self.group_fets.get(g);
        let g32 = g as u32;
        for &f in fets {
            let f = f as usize;
            let c = self.cond[f];
            if c == FetCond::Off {
                continue;
            }
            let dev = &self.net.fets[f];
            for (x, y) in [(dev.source, dev.drain), (dev.drain, dev.source)] {
                if self.is_source[x] && self.net_group[y] == g32 {
                    let s = &mut self.scratch[self.local[y] as usize];
                    let def = c == FetCond::On;
                    match self.vals[x] {
                        SwitchValue::One => {
                            s[P1] = true;
                            s[D1] |= def;
                        }
                        SwitchValue::Zero => {
                            s[P0] = true;
                            s[D0] |= def;
                        }
                        _ => {
                            s[P1] = true;
                            s[P0] = true;
                        }
                    }
                }
            }
        }
        loop {
            let mut moved = false;
            for &f in fets {
                let f = f as usize;
                let c = self.cond[f];
                if c == FetCond::Off {
                    continue;
                }
                let dev = &self.net.fets[f];
                if self.net_group[dev.source] != g32 || self.net_group[dev.drain] != g32 {
                    continue;
                }
                let (a, b) = (self.local[dev.source] as usize, self.local[dev.drain] as usize);
                let mask = if c == FetCond::On { [true; 4] } else { [false, true, false, true] };
                for (x, y) in [(a, b), (b, a)] {
                    for k in 0..4 {
                        // Possible reachability also flows from definite.
                        let from = if mask[k] {
                            self.scratch[x][k]
                        } else if k == P1 {
                            self.scratch[x][P1] | self.scratch[x][D1]
                        } else if k == P0 {
                            self.scratch[x][P0] | self.scratch[x][D0]
                        } else {
                            false
                        };
                        if from && !self.scratch[y][k] {
                            self.scratch[y][k] = true;
                            moved = true;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
        }
        for i in 0..m {
            let net = self.group_nets.get(g)[i] as usize;
            let s = self.scratch[self.local[net] as usize];
            let v = match (s[D1], s[P1], s[D0], s[P0]) {
                (true, _, _, false) => SwitchValue::One,
                (_, false, true, _) => SwitchValue::Zero,
                (_, false, _, false) => SwitchValue::Z,
                _ => SwitchValue::X,
            };
            if self.vals[net] != v {
                self.vals[net] = v;
                self.changed.push(net as u32);
            }
        }
    }

    /// Nets currently at X.
    pub fn x_nets(&self) -> Vec<usize> {
        (0..self.vals.len()).filter(|&n| self.vals[n] == SwitchValue::X).collect()
    }
}

/// Values of every net after settling from power-on with the given inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SettleReport {
    pub values: Vec<SwitchValue>,
    /// Every net that resolved to X, by name.
    pub x_nets: Vec<String>,
    pub waves: usize,
}

impl SettleReport {
    pub fn value(&self, t: &TransistorNet, name: &str) -> Option<SwitchValue> {
        t.net(name).map(|n| self.values[n])
    }
}

/// Settles a network from power-on with every primary input assigned.
pub fn settle_switch_net(t: &TransistorNet, inputs: &HashMap<String, bool>) -> Result<SettleReport, SwitchError> {
    let mut sim = SwitchSim::new(Arc::new(t.clone()));
    for &i in &t.inputs {
        let name = &t.net_names[i];
        let v = inputs.get(name).ok_or_else(|| SwitchError::UnknownNet(name.clone()))?;
        sim.set_input(i, LogicValue::from_bool(*v));
    }
    let waves = sim.settle(&mut |_, _| {})?;
    let x_nets = sim.x_nets().into_iter().map(|n| t.net_names[n].clone()).collect();
    Ok(SettleReport {
        values: sim.vals,
        x_nets,
        waves,
    })
}
