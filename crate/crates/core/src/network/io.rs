//! Two-section CSV network file.
//!
//! ```text
//! # nodes
//! agent_id,lambda,u_o,rho,credibility
//! 0,0.52,0.61,0.7,0.35
//! # edges
//! listener_id,source_id
//! 0,3
//! ```
//!
//! Floats are written in shortest round-trip form, so reading back is exact.
//! `P` is not stored: it is rebuilt from edges and credibility.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;

use super::InfluenceNetwork;
use crate::error::{Error, Result};

const NODE_SECTION: &str = "# nodes";
const EDGE_SECTION: &str = "# edges";
const NODE_HEADER: &str = "agent_id,lambda,u_o,rho,credibility";
const EDGE_HEADER: &str = "listener_id,source_id";

pub fn write_network(net: &InfluenceNetwork) -> Result<String> {
    let cred = net.credibility().ok_or_else(|| {
        Error::InvalidNetwork("network has no credibility vector and cannot be serialized".into())
    })?;
    let mut out = String::new();
    let _ = writeln!(out, "{NODE_SECTION}\n{NODE_HEADER}");
    for i in 0..net.n_agents() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{}",
            net.susceptibility()[i],
            net.inherent_bias()[i],
            net.persistence()[i],
            cred[i]
        );
    }
    let _ = writeln!(out, "{EDGE_SECTION}\n{EDGE_HEADER}");
    for &(w, v) in net.edges() {
        let _ = writeln!(out, "{w},{v}");
    }
    Ok(out)
}

pub fn write_network_file(net: &InfluenceNetwork, path: &Path) -> Result<()> {
    std::fs::write(path, write_network(net)?).map_err(|e| Error::io(path, e))
}

pub fn read_network_file(path: &Path) -> Result<InfluenceNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_network(&text).map_err(|e| match e {
        Error::Parse { line, reason, .. } => Error::Parse {
            context: path.display().to_string(),
            line,
            reason,
        },
        other => other,
    })
}

enum Section {
    None,
    Nodes,
    Edges,
}

pub fn read_network(text: &str) -> Result<InfluenceNetwork> {
    let perr = |line: usize, reason: String| Error::Parse {
        context: "network".into(),
        line,
        reason,
    };
    let mut section = Section::None;
    let mut expect_header = false;
    let mut nodes: Vec<(usize, [f64; 4])> = Vec::new();
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == NODE_SECTION {
            section = Section::Nodes;
            expect_header = true;
            continue;
        }
        if line == EDGE_SECTION {
            section = Section::Edges;
            expect_header = true;
            continue;
        }
        if expect_header {
            let want = match section {
                Section::Nodes => NODE_HEADER,
                _ => EDGE_HEADER,
            };
            if line != want {
                return Err(perr(lineno, format!("expected header `{want}`")));
            }
            expect_header = false;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match section {
            Section::None => return Err(perr(lineno, "data before any section header".into())),
            Section::Nodes => {
                if fields.len() != 5 {
                    return Err(perr(lineno, format!("expected 5 fields, got {}", fields.len())));
                }
                let id: usize = fields[0]
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad agent id `{}`", fields[0])))?;
                let mut vals = [0.0; 4];
                for (k, f) in fields[1..].iter().enumerate() {
                    vals[k] = f
                        .parse()
                        .map_err(|_| perr(lineno, format!("bad number `{f}`")))?;
                }
                nodes.push((id, vals));
            }
            Section::Edges => {
                if fields.len() != 2 {
                    return Err(perr(lineno, format!("expected 2 fields, got {}", fields.len())));
                }
                let w: usize = fields[0]
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad listener id `{}`", fields[0])))?;
                let v: usize = fields[1]
                    .parse()
                    .map_err(|_| perr(lineno, format!("bad source id `{}`", fields[1])))?;
                edges.push((w, v));
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::Empty("network node table"));
    }
    nodes.sort_by_key(|(id, _)| *id);
    for (expect, (id, _)) in nodes.iter().enumerate() {
        if *id != expect {
            return Err(perr(0, format!("agent ids must be 0..n without gaps (missing {expect})")));
        }
    }
    let n = nodes.len();
    let col = |k: usize| DVector::from_fn(n, |i, _| nodes[i].1[k]);
    InfluenceNetwork::from_credibility(edges, col(3), col(0), col(1), col(2))
}
