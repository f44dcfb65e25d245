//! Brute-force interval models.
//!
//! Every event is an interval with start < end. A model is a strict linear
//! order of all 2n endpoints; for each unordered pair it induces one of five
//! coarse relations. Entailment is read off by intersecting over all models
//! that satisfy a graph.

use temprel::corpus::LabelSchema;
use temprel::tempgraph::{Provenance, TemporalGraph};

/// Coarse relation of (i, j) with i < j.
pub const BEFORE: u8 = 0;
pub const AFTER: u8 = 1;
pub const INCLUDES: u8 = 2;
pub const IS_INCLUDED: u8 = 3;
pub const OTHER: u8 = 4;
pub const NAMES: [&str; 4] = ["BEFORE", "AFTER", "INCLUDES", "IS_INCLUDED"];

pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            out.push((i, j));
        }
    }
    out
}

fn relation(pos: &[usize], i: usize, j: usize) -> u8 {
    let (si, ei, sj, ej) = (pos[2 * i], pos[2 * i + 1], pos[2 * j], pos[2 * j + 1]);
    if ei < sj {
        BEFORE
    } else if ej < si {
        AFTER
    } else if si < sj && ej < ei {
        INCLUDES
    } else if sj < si && ei < ej {
        IS_INCLUDED
    } else {
        OTHER
    }
}

/// Calls `f` with the endpoint positions of every linear order.
pub fn for_each_order(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(n: usize, step: usize, state: &mut Vec<u8>, pos: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if step == 2 * n {
            f(pos);
            return;
        }
        for i in 0..n {
            match state[i] {
                0 => {
                    state[i] = 1;
                    pos[2 * i] = step;
                    rec(n, step + 1, state, pos, f);
                    state[i] = 0;
                }
                1 => {
                    state[i] = 2;
                    pos[2 * i + 1] = step;
                    rec(n, step + 1, state, pos, f);
                    state[i] = 1;
                }
                _ => {}
            }
        }
    }
    rec(n, 0, &mut vec![0; n], &mut vec![0; 2 * n], f);
}

/// Distinct relation signatures over all models of n intervals, 3 bits per
/// pair in [`pairs`] order.
pub fn signatures(n: usize) -> Vec<u64> {
    let ps = pairs(n);
    let mut out = Vec::new();
    for_each_order(n, &mut |pos| {
        let mut sig = 0u64;
        for (k, &(i, j)) in ps.iter().enumerate() {
            sig |= (relation(pos, i, j) as u64) << (3 * k);
        }
        out.push(sig);
    });
    out.sort_unstable();
    out.dedup();
    out
}

/// A graph as fixed relations on some pairs: `Some(code)` per pair.
pub type Assignment = Vec<Option<u8>>;

fn mask_of(a: &Assignment) -> (u64, u64) {
    let (mut mask, mut value) = (0u64, 0u64);
    for (k, c) in a.iter().enumerate() {
        if let Some(c) = c {
            mask |= 0b111 << (3 * k);
            value |= (*c as u64) << (3 * k);
        }
    }
    (mask, value)
}

/// `None` when no model satisfies the assignment; otherwise, per pair, the
/// relation shared by every satisfying model (if any).
pub fn entailed(sigs: &[u64], a: &Assignment) -> Option<Vec<Option<u8>>> {
    let (mask, value) = mask_of(a);
    let mut seen = vec![0u8; a.len()];
    let mut any = false;
    for &s in sigs {
        if s & mask == value {
            any = true;
            for (k, bits) in seen.iter_mut().enumerate() {
                *bits |= 1 << ((s >> (3 * k)) & 0b111);
            }
        }
    }
    if !any {
        return None;
    }
    Some(
        seen.iter()
            .map(|&bits| {
                let code = bits.trailing_zeros() as u8;
                (bits.count_ones() == 1 && code != OTHER).then_some(code)
            })
            .collect(),
    )
}

pub fn node(i: usize) -> String {
    format!("n{i}")
}

/// The graph asserting `a`, with each edge stored as given (i, j) or, when
/// `flip` says so, as the inverse on (j, i).
pub fn build_graph(schema: &LabelSchema, n: usize, a: &Assignment, flip: &[bool]) -> TemporalGraph {
    let mut g = TemporalGraph::new(schema);
    for i in 0..n {
        g.add_node(&node(i));
    }
    for (k, &(i, j)) in pairs(n).iter().enumerate() {
        if let Some(c) = a[k] {
            let label = schema.get(NAMES[c as usize]).unwrap();
            if flip.get(k).copied().unwrap_or(false) {
                g.add_edge(&node(j), &node(i), schema.inverse(label), Provenance::Gold).unwrap();
            } else {
                g.add_edge(&node(i), &node(j), label, Provenance::Gold).unwrap();
            }
        }
    }
    g
}

/// Compares `closure` and `is_consistent` of the graph against the oracle.
/// Returns a description of the first disagreement.
pub fn check_graph(schema: &LabelSchema, sigs: &[u64], n: usize, a: &Assignment, flip: &[bool]) -> Result<(), String> {
    let g = build_graph(schema, n, a, flip);
    let oracle = entailed(sigs, a);
    if g.is_consistent() != oracle.is_some() {
        return Err(format!("{a:?}: consistency {} vs oracle {}", g.is_consistent(), oracle.is_some()));
    }
    let Some(expected) = oracle else {
        return Ok(());
    };
    let c = g.closure();
    for (k, &(i, j)) in pairs(n).iter().enumerate() {
        let got = c.query(&node(i), &node(j)).map(|l| schema.name(l).to_string());
        let want = expected[k].map(|code| NAMES[code as usize].to_string());
        if got != want {
            return Err(format!("{a:?} flip {flip:?}: pair ({i},{j}) closure {got:?} oracle {want:?}"));
        }
    }
    Ok(())
}

/// Calls `f` for every assignment over `codes` (None always included).
pub fn for_each_assignment(n_pairs: usize, codes: &[u8], f: &mut impl FnMut(&Assignment)) {
    let mut a: Assignment = vec![None; n_pairs];
    let radix = codes.len() + 1;
    let total = radix.pow(n_pairs as u32);
    for mut x in 0..total {
        for slot in a.iter_mut() {
            let d = x % radix;
            x /= radix;
            *slot = if d == 0 { None } else { Some(codes[d - 1]) };
        }
        f(&a);
    }
}

/// Forward graphs over {BEFORE, INCLUDES}: every edge goes from the lower
/// node index to the higher. Pair k holds digit k of the base-3 index
/// (0 = no edge, 1 = BEFORE, 2 = INCLUDES).
pub fn forward_assignment(n_pairs: usize, mut index: usize) -> Assignment {
    let mut a = vec![None; n_pairs];
    for slot in a.iter_mut() {
        *slot = match index % 3 {
            0 => None,
            1 => Some(BEFORE),
            _ => Some(INCLUDES),
        };
        index /= 3;
    }
    a
}

/// For every forward graph on n nodes, the union over its satisfying models
/// of the relation seen on each pair: 5 bits per pair, zero when the graph
/// has no model.
pub fn forward_table(n: usize) -> Vec<u128> {
    let np = n * (n - 1) / 2;
    let size = 3usize.pow(np as u32);
    let mut table = vec![0u128; size];
    for sig in signatures(n) {
        let mut idx = 0usize;
        let mut bits = 0u128;
        let mut place = 1usize;
        for k in 0..np {
            let code = ((sig >> (3 * k)) & 0b111) as u8;
            bits |= 1u128 << (5 * k + code as usize);
            idx += place
                * match code {
                    BEFORE => 1,
                    INCLUDES => 2,
                    _ => 0,
                };
            place *= 3;
        }
        table[idx] |= bits;
    }
    // A graph leaving pair k open is satisfied by every model of the graphs
    // that fix it.
    let mut place = 1usize;
    for _ in 0..np {
        for idx in 0..size {
            if (idx / place).is_multiple_of(3) {
                table[idx] |= table[idx + place] | table[idx + 2 * place];
            }
        }
        place *= 3;
    }
    table
}

/// Decodes one [`forward_table`] entry the same way [`entailed`] reports.
pub fn decode_entry(entry: u128, n_pairs: usize) -> Option<Vec<Option<u8>>> {
    if entry == 0 {
        return None;
    }
    Some(
        (0..n_pairs)
            .map(|k| {
                let bits = ((entry >> (5 * k)) & 0b11111) as u8;
                let code = bits.trailing_zeros() as u8;
                (bits.count_ones() == 1 && code != OTHER).then_some(code)
            })
            .collect(),
    )
}

/// Checks every forward graph on `n` nodes; returns how many were checked.
pub fn check_forward_exhaustive(schema: &LabelSchema, n: usize) -> Result<usize, String> {
    let np = n * (n - 1) / 2;
    let table = forward_table(n);
    for (idx, &entry) in table.iter().enumerate() {
        let a = forward_assignment(np, idx);
        let g = build_graph(schema, n, &a, &[]);
        let oracle = decode_entry(entry, np);
        if g.is_consistent() != oracle.is_some() {
            return Err(format!("{a:?}: consistency {} vs oracle {}", g.is_consistent(), oracle.is_some()));
        }
        let Some(expected) = oracle else { continue };
        let c = g.closure();
        for (k, &(i, j)) in pairs(n).iter().enumerate() {
            let got = c.query(&node(i), &node(j)).map(|l| schema.name(l).to_string());
            let want = expected[k].map(|code| NAMES[code as usize].to_string());
            if got != want {
                return Err(format!("{a:?}: pair ({i},{j}) closure {got:?} oracle {want:?}"));
            }
        }
    }
    Ok(table.len())
}

/// Random graph over all four interval labels, edges stored in random
/// orientation.
pub fn random_graph(schema: &LabelSchema, n: usize, density: f64, rng: &mut impl rand::Rng) -> (Assignment, Vec<bool>, TemporalGraph) {
    let np = n * (n - 1) / 2;
    let a: Assignment = (0..np)
        .map(|_| rng.gen_bool(density).then(|| rng.gen_range(0..4u8)))
        .collect();
    let flip: Vec<bool> = (0..np).map(|_| rng.gen_bool(0.5)).collect();
    let g = build_graph(schema, n, &a, &flip);
    (a, flip, g)
}
