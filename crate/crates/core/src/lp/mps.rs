//! Free-format MPS export of a restricted LP.
//!
//! Rows: `COST` (objective), `R0` (total mass), `M1..MN` (moments).
//! Columns: `X1..XK` in point order. Values are unscaled and written in
//! shortest round-trip exponent form.

use std::fmt::Write;

use super::RestrictedLP;

pub fn write_mps(lp: &RestrictedLP, name: &str) -> String {
    let mut out = String::new();
    let n = lp.moments();
    let _ = writeln!(out, "NAME {name}");
    out.push_str("ROWS\n N COST\n E R0\n");
    for i in 1..=n {
        let _ = writeln!(out, " E M{i}");
    }
    out.push_str("COLUMNS\n");
    for l in 0..lp.len() {
        let col = lp.column(l);
        let cost = lp.costs()[l];
        if cost != 0.0 {
            let _ = writeln!(out, "    X{} COST {:e}", l + 1, cost);
        }
        let _ = writeln!(out, "    X{} R0 {:e}", l + 1, col[0]);
        for (i, v) in col.iter().enumerate().skip(1) {
            if *v != 0.0 {
                let _ = writeln!(out, "    X{} M{i} {v:e}", l + 1);
            }
        }
    }
    out.push_str("RHS\n    RHS R0 1e0\nENDATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_stable() {
        let lp = RestrictedLP::from_moments(vec![0.0, 2.0], vec![vec![1.0], vec![-1.0]]).unwrap();
        let text = write_mps(&lp, "TWO");
        assert_eq!(
            text,
            "NAME TWO\nROWS\n N COST\n E R0\n E M1\nCOLUMNS\n    X1 R0 1e0\n    X1 M1 1e0\n    X2 COST 2e0\n    X2 R0 1e0\n    X2 M1 -1e0\nRHS\n    RHS R0 1e0\nENDATA\n"
        );
    }
}
