//! Model files (JSON) and trajectory files (JSON Lines).
//!
//! Model file:
//!
//! ```json
//! {"nodes":[{"cardinality":2},{"cardinality":2}],
//!  "edges":[[0,1]],
//!  "family":"weibull",
//!  "phi":{"0/0/0":[2.0,1.0], ...},
//!  "theta":{"0/0/0":[0.0,1.0], ...}}
//! ```
//!
//! Keys are `node/state/parent_state`. `phi` and `theta` may be omitted for a
//! structure-only file. A trajectory file is a sequence of trajectories, each
//! introduced by a header record `{"init":[...],"end_time":T}` (plus
//! `"clocks"` when any initial clock is nonzero) and followed by one
//! `{"t":..,"node":..,"state":..}` record per event.

use std::io::{BufRead, Write};

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{num_parent_states, ClockedState, Event, Graph, NetworkModel, Trajectory};
use crate::survival::{Family, SurvivalParams};

/// Map from `n/x/u` keys to vectors, kept in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyedTable(pub Vec<(String, Vec<f64>)>);

impl Serialize for KeyedTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for KeyedTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct TableVisitor;
        impl<'de> Visitor<'de> for TableVisitor {
            type Value = KeyedTable;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a map from \"n/x/u\" keys to number arrays")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<KeyedTable, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, Vec<f64>>()? {
                    entries.push((k, v));
                }
                Ok(KeyedTable(entries))
            }
        }
        deserializer.deserialize_map(TableVisitor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub cardinality: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<KeyedTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<KeyedTable>,
}

fn parse_key(key: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<_> = key.split('/').collect();
    let bad = || Error::InvalidModel(format!("malformed table key '{key}' (want n/x/u)"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0usize; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| bad())?;
    }
    Ok((out[0], out[1], out[2]))
}

impl ModelFile {
    pub fn cardinalities(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.cardinality).collect()
    }

    pub fn graph(&self) -> Result<Graph> {
        let edges: Vec<_> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Graph::new(self.nodes.len(), &edges)
    }

    pub fn from_model(model: &NetworkModel) -> Self {
        let cards = model.cardinalities();
        let family = model.phi_table().iter().flatten().next().map(|p| p.family());
        let mut phi = Vec::new();
        let mut theta = Vec::new();
        for n in 0..model.num_nodes() {
            let u_count = model.num_parent_states(n);
            for x in 0..cards[n] {
                for u in 0..u_count {
                    let key = format!("{n}/{x}/{u}");
                    phi.push((key.clone(), model.phi(n, x, u).params().to_vec()));
                    theta.push((key, model.theta(n, x, u).to_vec()));
                }
            }
        }
        Self {
            nodes: cards.iter().map(|&cardinality| NodeSpec { cardinality }).collect(),
            edges: model.graph().edges().into_iter().map(|(a, b)| [a, b]).collect(),
            family,
            phi: Some(KeyedTable(phi)),
            theta: Some(KeyedTable(theta)),
        }
    }

    /// Assembles a full model; requires `family`, `phi` and `theta`.
    pub fn to_model(&self) -> Result<NetworkModel> {
        let graph = self.graph()?;
        let cards = self.cardinalities();
        if let Some(n) = cards.iter().position(|&c| c < 2) {
            return Err(Error::InvalidModel(format!("node {n} has fewer than two states")));
        }
        let family = self
            .family
            .ok_or_else(|| Error::InvalidModel("missing 'family'".into()))?;
        let phi_in = self.phi.as_ref().ok_or_else(|| Error::InvalidModel("missing 'phi'".into()))?;
        let theta_in = self
            .theta
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("missing 'theta'".into()))?;
        let sizes: Vec<(usize, usize)> = (0..cards.len())
            .map(|n| (cards[n], num_parent_states(graph.parents(n), &cards)))
            .collect();
        let mut phi: Vec<Vec<Option<SurvivalParams>>> = sizes.iter().map(|&(c, u)| vec![None; c * u]).collect();
        let mut theta: Vec<Vec<Option<Vec<f64>>>> = sizes.iter().map(|&(c, u)| vec![None; c * u]).collect();
        let locate = |key: &str| -> Result<(usize, usize)> {
            let (n, x, u) = parse_key(key)?;
            match sizes.get(n) {
                Some(&(c, uc)) if x < c && u < uc => Ok((n, x * uc + u)),
                _ => Err(Error::InvalidModel(format!("table key '{key}' out of range"))),
            }
        };
        for (key, values) in &phi_in.0 {
            let (n, row) = locate(key)?;
            let p = SurvivalParams::new(family, values)
                .map_err(|e| Error::InvalidModel(format!("phi '{key}': {e}")))?;
            if phi[n][row].replace(p).is_some() {
                return Err(Error::InvalidModel(format!("duplicate phi key '{key}'")));
            }
        }
        for (key, values) in &theta_in.0 {
            let (n, row) = locate(key)?;
            if theta[n][row].replace(values.clone()).is_some() {
                return Err(Error::InvalidModel(format!("duplicate theta key '{key}'")));
            }
        }
        let missing = |what: &str, n: usize, row: usize| {
            let uc = sizes[n].1;
            Error::InvalidModel(format!("missing {what} entry {n}/{}/{}", row / uc, row % uc))
        };
        let phi = phi
            .into_iter()
            .enumerate()
            .map(|(n, rows)| {
                rows.into_iter()
                    .enumerate()
                    .map(|(r, p)| p.ok_or_else(|| missing("phi", n, r)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let theta = theta
            .into_iter()
            .enumerate()
            .map(|(n, rows)| {
                rows.into_iter()
                    .enumerate()
                    .map(|(r, p)| p.ok_or_else(|| missing("theta", n, r)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        NetworkModel::new(graph, cards, phi, theta)
    }
}

pub fn read_model_file(path: &std::path::Path) -> Result<ModelFile> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn model_to_json(model: &NetworkModel) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_model(model))?)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Record {
    Header {
        init: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clocks: Option<Vec<f64>>,
        end_time: f64,
    },
    Event {
        t: f64,
        node: usize,
        state: usize,
    },
}

/// Writes trajectories as JSON Lines.
pub fn write_trajectories<W: Write>(mut out: W, trajs: &[Trajectory]) -> Result<()> {
    for tr in trajs {
        let clocks = tr
            .initial
            .clocks
            .iter()
            .any(|&c| c != 0.0)
            .then(|| tr.initial.clocks.clone());
        let header = Record::Header {
            init: tr.initial.states.clone(),
            clocks,
            end_time: tr.end_time,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for e in &tr.events {
            let rec = Record::Event {
                t: e.time,
                node: e.node,
                state: e.state,
            };
            writeln!(out, "{}", serde_json::to_string(&rec)?)?;
        }
    }
    Ok(())
}

pub fn trajectories_to_string(trajs: &[Trajectory]) -> Result<String> {
    let mut buf = Vec::new();
    write_trajectories(&mut buf, trajs)?;
    Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
}

/// Reads every trajectory in a JSON Lines stream and validates each one.
pub fn read_trajectories<R: BufRead>(input: R) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        match rec {
            Record::Header { init, clocks, end_time } => {
                let clocks = clocks.unwrap_or_else(|| vec![0.0; init.len()]);
                out.push(Trajectory {
                    initial: ClockedState { states: init, clocks },
                    events: Vec::new(),
                    end_time,
                });
            }
            Record::Event { t, node, state } => {
                let tr = out.last_mut().ok_or_else(|| Error::Parse {
                    line: line_no,
                    msg: "event record before any trajectory header".into(),
                })?;
                tr.events.push(Event { time: t, node, state });
            }
        }
    }
    for tr in &out {
        tr.validate(None)?;
    }
    Ok(out)
}

pub fn read_trajectory_file(path: &std::path::Path) -> Result<Vec<Trajectory>> {
    let f = std::fs::File::open(path)?;
    read_trajectories(std::io::BufReader::new(f))
}
