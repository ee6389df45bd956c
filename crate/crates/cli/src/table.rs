//! Plain-text trade instruction tables.
//!
//! One column per token in document order, a PRICE row in target-token
//! units, one row per curve and the AMMIn / AMMOut / TOTAL NET rows.
//! Amounts carry three decimals and prices one, both with thousands
//! separators; cells for tokens a curve does not trade stay blank.

use mpo_core::TradeInstructionMatrix;

const LABEL_WIDTH: usize = 9;
const GAP: &str = "   ";

/// `1234567.891` as `1,234,567.891`. Negative values that round to zero
/// keep their sign.
pub fn group_thousands(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => ("-", rest),
        None => ("", s.as_str()),
    };
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    if !int.bytes().all(|b| b.is_ascii_digit()) {
        // inf / NaN
        return s;
    }
    let mut out = String::with_capacity(s.len() + int.len() / 3);
    out.push_str(sign);
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if let Some(f) = frac {
        out.push('.');
        out.push_str(f);
    }
    out
}

pub fn render(tim: &TradeInstructionMatrix) -> String {
    let n = tim.n_tokens();
    let amount = |v: f64| group_thousands(v, 3);
    let mut rows: Vec<(String, Vec<String>)> = Vec::with_capacity(tim.rows.len() + 4);
    rows.push((
        "PRICE".into(),
        tim.prices.iter().map(|&p| group_thousands(p, 1)).collect(),
    ));
    for r in &tim.rows {
        let cells = (0..n)
            .map(|t| r.delta(t).map(amount).unwrap_or_default())
            .collect();
        rows.push((r.curve_id.clone(), cells));
    }
    rows.push((
        "AMMIn".into(),
        tim.amm_in.iter().map(|&v| amount(v)).collect(),
    ));
    rows.push((
        "AMMOut".into(),
        tim.amm_out.iter().map(|&v| amount(v)).collect(),
    ));
    rows.push((
        "TOTAL NET".into(),
        tim.total_net.iter().map(|&v| amount(v)).collect(),
    ));

    let label_width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .max()
        .unwrap_or(0)
        .max(LABEL_WIDTH);
    let widths: Vec<usize> = (0..n)
        .map(|t| {
            rows.iter()
                .map(|(_, c)| c[t].len())
                .chain([tim.tokens[t].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    let mut line = |label: &str, cells: &[&str]| {
        let mut s = format!("{label:<label_width$}");
        for (c, w) in cells.iter().zip(&widths) {
            s.push_str(GAP);
            s.push_str(&format!("{c:>w$}"));
        }
        out.push_str(s.trim_end());
        out.push('\n');
    };
    let header: Vec<&str> = tim.tokens.iter().map(String::as_str).collect();
    line("", &header);
    for (label, cells) in &rows {
        let cells: Vec<&str> = cells.iter().map(String::as_str).collect();
        line(label, &cells);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mpo_core::TimRow;

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(2377.2, 1), "2,377.2");
        assert_eq!(group_thousands(-6370.0512, 3), "-6,370.051");
        assert_eq!(group_thousands(-0.0001, 3), "-0.000");
        assert_eq!(group_thousands(999.9996, 3), "1,000.000");
        assert_eq!(group_thousands(123.0, 0), "123");
        assert_eq!(group_thousands(1e6, 3), "1,000,000.000");
        assert_eq!(group_thousands(f64::INFINITY, 1), "inf");
    }

    #[test]
    fn layout() {
        let rows = vec![
            TimRow {
                curve_id: "ETH1".into(),
                token_x: 0,
                token_y: 1,
                dx: -0.119,
                dy: 224.201,
            },
            TimRow {
                curve_id: "ETH3".into(),
                token_x: 0,
                token_y: 1,
                dx: 0.119,
                dy: -358.0,
            },
            TimRow {
                curve_id: "X".into(),
                token_x: 2,
                token_y: 1,
                dx: 0.0,
                dy: 0.0,
            },
        ];
        let tim = TradeInstructionMatrix::new(
            vec!["WETH".into(), "USDC".into(), "DAI".into()],
            1,
            vec![2377.2, 1.0, 1.0],
            rows,
        );
        let expected = concat!(
            "               WETH       USDC     DAI\n",
            "PRICE       2,377.2        1.0     1.0\n",
            "ETH1         -0.119    224.201\n",
            "ETH3          0.119   -358.000\n",
            "X                        0.000   0.000\n",
            "AMMIn         0.119    224.201   0.000\n",
            "AMMOut       -0.119   -358.000   0.000\n",
            "TOTAL NET     0.000   -133.799   0.000\n",
        );
        assert_eq!(render(&tim), expected);
    }
}
