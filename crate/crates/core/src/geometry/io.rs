//! Plain-text domain exchange format.
//!
//! ```text
//! hotspots-domain v1
//! v <x> <y>
//! e <i> <j> <tag>
//! p <name> <x> <y>
//! ```
//!
//! Vertices are zero-indexed in file order; every edge references existing
//! vertices and the edges of each loop appear in walk order. Floats are
//! written with Rust's shortest round-trip formatting, so export → import is
//! bit-exact on coordinates.

use super::{DomainSpec, EdgeTag, GeomError, RegionId, P2};

pub fn export_domain(spec: &DomainSpec) -> String {
    let mut out = String::from("hotspots-domain v1\n");
    for v in &spec.verts {
        out.push_str(&format!("v {} {}\n", v.x, v.y));
    }
    for (i, _, _, tag) in spec.edges() {
        out.push_str(&format!("e {} {} {}\n", i, spec.edge_end(i), tag.as_str()));
    }
    for (name, q) in &spec.named {
        out.push_str(&format!("p {} {} {}\n", name, q.x, q.y));
    }
    out
}

pub fn import_domain(text: &str) -> Result<DomainSpec, GeomError> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header.trim() != "hotspots-domain v1" {
        return Err(GeomError::Format(format!("bad header {header:?}")));
    }
    let mut verts: Vec<P2> = Vec::new();
    let mut succ: Vec<(usize, usize, EdgeTag)> = Vec::new();
    let mut named = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut f = line.split_whitespace();
        let kind = f.next().unwrap();
        let res: Option<()> = (|| match kind {
            "v" => {
                let x: f64 = f.next()?.parse().ok()?;
                let y: f64 = f.next()?.parse().ok()?;
                verts.push(P2 { x, y });
                Some(())
            }
            "e" => {
                let i: usize = f.next()?.parse().ok()?;
                let j: usize = f.next()?.parse().ok()?;
                let tag = EdgeTag::parse(f.next()?)?;
                succ.push((i, j, tag));
                Some(())
            }
            "p" => {
                let name = f.next()?.to_string();
                let x: f64 = f.next()?.parse().ok()?;
                let y: f64 = f.next()?.parse().ok()?;
                named.push((name, P2 { x, y }));
                Some(())
            }
            _ => None,
        })();
        if res.is_none() {
            return Err(GeomError::Format(format!(
                "line {}: cannot parse {line:?}",
                lineno + 2
            )));
        }
    }
    if verts.is_empty() || succ.len() != verts.len() {
        return Err(GeomError::Format(format!(
            "{} vertices but {} edges (loops must be closed)",
            verts.len(),
            succ.len()
        )));
    }
    let n = verts.len();
    let mut next = vec![usize::MAX; n];
    let mut tag_of = vec![EdgeTag::NeumannOther; n];
    for &(i, j, tag) in &succ {
        if i >= n || j >= n || next[i] != usize::MAX {
            return Err(GeomError::Format(format!("bad edge {i} -> {j}")));
        }
        next[i] = j;
        tag_of[i] = tag;
    }
    // walk the successor permutation into loops
    let mut seen = vec![false; n];
    let mut loops = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut pts = Vec::new();
        let mut tags = Vec::new();
        let mut cur = start;
        loop {
            if seen[cur] {
                return Err(GeomError::Format(format!(
                    "edges do not form simple loops (revisited vertex {cur})"
                )));
            }
            seen[cur] = true;
            pts.push(verts[cur]);
            tags.push(tag_of[cur]);
            cur = next[cur];
            if cur == start {
                break;
            }
        }
        loops.push((pts, tags));
    }
    let has_dirichlet = tag_of.contains(&EdgeTag::DirichletD);
    let region = if has_dirichlet {
        RegionId::QuarterD1
    } else if loops.len() == 2 {
        RegionId::FullD
    } else {
        RegionId::Generic
    };
    let mut spec = DomainSpec::from_loops(region, None, loops)?;
    spec.named = named;
    Ok(spec)
}
