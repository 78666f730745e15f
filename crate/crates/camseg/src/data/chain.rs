//! Freeman chain-code boundaries and their rasterization to filled masks.
//!
//! Boundaries arrive as a start pixel plus a sequence of unit steps in the
//! eight compass directions. Decoding marks every visited pixel as
//! foreground, then fills the enclosed interior with an even-odd scanline
//! pass, so the resulting mask is boundary-inclusive.

use crate::metrics::BinaryMask;

use super::DataError;

/// A closed 8-direction boundary: a start pixel `(row, col)` plus unit
/// steps. Code 0 is east and successive codes rotate counter-clockwise
/// with north meaning decreasing row: 1=NE, 2=N, 3=NW, 4=W, 5=SW, 6=S,
/// 7=SE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryChain {
    pub start: (usize, usize),
    pub codes: Vec<u8>,
}

/// `(d_row, d_col)` for each direction code.
const STEPS: [(isize, isize); 8] = [
    (0, 1),   // 0: E
    (-1, 1),  // 1: NE
    (-1, 0),  // 2: N
    (-1, -1), // 3: NW
    (0, -1),  // 4: W
    (1, -1),  // 5: SW
    (1, 0),   // 6: S
    (1, 1),   // 7: SE
];

/// Rasterizes a closed chain onto a `width`×`height` canvas and fills the
/// interior.
///
/// The path itself is foreground; interior pixels are decided by even-odd
/// crossing counts along each scanline. A zero-length chain decodes to a
/// single-pixel mask.
pub fn decode_chain_code(
    chain: &BoundaryChain,
    width: usize,
    height: usize,
) -> Result<BinaryMask, DataError> {
    let oob = |at: (isize, isize)| DataError::ChainOutOfBounds { width, height, at };
    let start = (chain.start.0 as isize, chain.start.1 as isize);
    if chain.start.0 >= height || chain.start.1 >= width {
        return Err(oob(start));
    }
    let mut path = Vec::with_capacity(chain.codes.len() + 1);
    path.push(start);
    let mut pos = start;
    for &code in &chain.codes {
        let (dr, dc) = *STEPS
            .get(code as usize)
            .ok_or(DataError::BadChainCode(code))?;
        pos = (pos.0 + dr, pos.1 + dc);
        if pos.0 < 0 || pos.1 < 0 || pos.0 >= height as isize || pos.1 >= width as isize {
            return Err(oob(pos));
        }
        path.push(pos);
    }
    if pos != start {
        return Err(DataError::OpenChain {
            start: chain.start,
            end: pos,
        });
    }

    let mut mask = BinaryMask::new(width, height);
    for &(r, c) in &path {
        mask.set(c as usize, r as usize, true);
    }

    // Even-odd scanline fill. Every edge is a unit step, so an edge spans a
    // row half-open (its lower row only) and crosses it at an integer
    // column — which is necessarily a path pixel. Interior pixels therefore
    // see every crossing strictly to one side, making the parity rule
    // unambiguous.
    let mut crossings: Vec<usize> = Vec::new();
    for row in 0..height as isize {
        crossings.clear();
        for edge in path.windows(2) {
            let (r0, c0) = edge[0];
            let (r1, c1) = edge[1];
            if r0 == r1 {
                continue;
            }
            let (rmin, cross_col) = if r0 < r1 { (r0, c0) } else { (r1, c1) };
            if row == rmin {
                crossings.push(cross_col as usize);
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_unstable();
        let mut inside = false;
        let mut next = 0;
        for col in 0..width {
            while next < crossings.len() && crossings[next] < col {
                inside = !inside;
                next += 1;
            }
            if inside {
                mask.set(col, row as usize, true);
            }
        }
    }
    Ok(mask)
}

/// Parses chain-code text: one boundary per line, `row col: c1 c2 ...`.
///
/// Blank lines are skipped; a line with no codes after the colon is the
/// degenerate single-pixel chain.
pub fn parse_chain_codes(text: &str) -> Result<Vec<BoundaryChain>, DataError> {
    let bad = |line_no: usize, why: &str| {
        DataError::ChainParse(format!("line {}: {}", line_no + 1, why))
    };
    let mut chains = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (head, tail) = line
            .split_once(':')
            .ok_or_else(|| bad(line_no, "missing ':' after start point"))?;
        let mut head_parts = head.split_whitespace();
        let row = head_parts
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| bad(line_no, "start row is not a non-negative integer"))?;
        let col = head_parts
            .next()
            .and_then(|t| t.parse::<usize>().ok())
            .ok_or_else(|| bad(line_no, "start col is not a non-negative integer"))?;
        if head_parts.next().is_some() {
            return Err(bad(line_no, "start point has more than two fields"));
        }
        let codes = tail
            .split_whitespace()
            .map(|t| {
                t.parse::<u8>()
                    .map_err(|_| bad(line_no, "direction code is not an integer in 0..=7"))
            })
            .collect::<Result<Vec<u8>, _>>()?;
        chains.push(BoundaryChain {
            start: (row, col),
            codes,
        });
    }
    Ok(chains)
}
