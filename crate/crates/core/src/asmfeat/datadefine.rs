use crate::corpus::{AsmLine, AsmListing, UNKNOWN_SECTION};
use crate::feature::{Category, FeatureBlock};

use super::sections::KNOWN_SECTIONS;

pub const DATA_DEFINE_NAMES: [&str; 24] = [
    "db_por",
    "dd_por",
    "dw_por",
    "dc_por",
    "db0_por",
    "dbN0_por",
    "db_text",
    "db3_rdata",
    "db3_data",
    "db3_idata",
    "db3_all",
    "db3_NdNt",
    "db3_zero_all",
    "dd_text",
    "dd_rdata",
    "dd4",
    "dd5",
    "dd6",
    "dd4_all",
    "dd5_all",
    "dd6_all",
    "dd4_NdNt",
    "dd5_NdNt",
    "dd6_NdNt",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Directive {
    Db,
    Dw,
    Dd,
}

fn directive_kind(tok: &str) -> Option<Directive> {
    match tok {
        "db" => Some(Directive::Db),
        "dw" => Some(Directive::Dw),
        "dd" => Some(Directive::Dd),
        _ => None,
    }
}

/// The directive and the text of its operand list. IDA usually puts a
/// label before the directive (`dword_403010 dd 0`), so the directive may
/// be the first or second token after the byte columns.
fn directive(line: &AsmLine) -> Option<(Directive, String)> {
    let start = line.tokens.iter().position(|t| {
        let t = t.strip_suffix('+').unwrap_or(t);
        !(t.len() == 2 && t.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b)))
    })?;
    let (pos, kind) = line.tokens[start..]
        .iter()
        .take(2)
        .enumerate()
        .find_map(|(i, t)| directive_kind(t).map(|k| (start + i, k)))?;
    let rest = &line.tokens[pos + 1..];
    let mut text = String::new();
    for t in rest {
        if t.starts_with(';') {
            break;
        }
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(t);
    }
    Some((kind, text))
}

/// Comma-separated operands at parenthesis depth 0, outside quotes.
/// `3 dup(0)` stays one operand.
pub fn split_operands(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    let mut quote: Option<char> = None;
    for c in text.chars() {
        if let Some(q) = quote {
            cur.push(c);
            if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => {
                quote = Some(c);
                cur.push(c);
            }
            '(' => {
                depth += 1;
                cur.push(c);
            }
            ')' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => out.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    out.push(cur);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_number(s: &str) -> Option<u64> {
    let s = s.trim();
    if let Some(h) = s.strip_suffix('h').or_else(|| s.strip_suffix('H')) {
        return u64::from_str_radix(h, 16).ok();
    }
    if let Some(h) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(h, 16).ok();
    }
    s.parse().ok()
}

/// `0`, `00h`, `?` and `N dup(0)` / `N dup(?)` are zero; anything else
/// (strings, offsets, nonzero literals) is not.
fn operand_is_zero(op: &str) -> bool {
    let op = op.trim();
    if op == "?" {
        return true;
    }
    if let Some(idx) = op.find("dup(") {
        let inner = op[idx + 4..].trim_end_matches(')');
        return split_operands(inner).iter().all(|o| operand_is_zero(o));
    }
    parse_number(op) == Some(0)
}

#[derive(Default)]
struct Tally {
    total: usize,
    text_lines: usize,
    rdata_lines: usize,
    data_lines: usize,
    idata_lines: usize,
    unknown_lines: usize,
    db: usize,
    dw: usize,
    dd: usize,
    db0: usize,
    db_text: usize,
    db3: usize,
    db3_rdata: usize,
    db3_data: usize,
    db3_idata: usize,
    db3_unknown: usize,
    dd_text: usize,
    dd_rdata: usize,
    dd_n: [usize; 3],
    dd_n_unknown: [usize; 3],
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Table of db/dw/dd directive proportions. "Unknown sections" are named
/// sections outside the nine known PE sections; unprefixed lines belong
/// to no section.
pub fn data_define_features(listing: &AsmListing) -> FeatureBlock {
    let mut t = Tally {
        total: listing.line_count,
        ..Tally::default()
    };
    for line in &listing.lines {
        let sec = line.section.as_str();
        let unknown = sec != UNKNOWN_SECTION && !KNOWN_SECTIONS.contains(&sec);
        match sec {
            ".text" => t.text_lines += 1,
            ".rdata" => t.rdata_lines += 1,
            ".data" => t.data_lines += 1,
            ".idata" => t.idata_lines += 1,
            _ if unknown => t.unknown_lines += 1,
            _ => {}
        }
        let Some((kind, text)) = directive(line) else { continue };
        let ops = split_operands(&text);
        match kind {
            Directive::Db => {
                t.db += 1;
                if sec == ".text" {
                    t.db_text += 1;
                }
                if ops.iter().all(|o| operand_is_zero(o)) {
                    t.db0 += 1;
                }
                if ops.len() == 1 && !operand_is_zero(&ops[0]) {
                    t.db3 += 1;
                    match sec {
                        ".rdata" => t.db3_rdata += 1,
                        ".data" => t.db3_data += 1,
                        ".idata" => t.db3_idata += 1,
                        _ if unknown => t.db3_unknown += 1,
                        _ => {}
                    }
                }
            }
            Directive::Dw => t.dw += 1,
            Directive::Dd => {
                t.dd += 1;
                match sec {
                    ".text" => t.dd_text += 1,
                    ".rdata" => t.dd_rdata += 1,
                    _ => {}
                }
                if (4..=6).contains(&ops.len()) {
                    t.dd_n[ops.len() - 4] += 1;
                    if unknown {
                        t.dd_n_unknown[ops.len() - 4] += 1;
                    }
                }
            }
        }
    }
    let dbn0 = t.db - t.db0;
    let values = vec![
        ratio(t.db, t.total),
        ratio(t.dd, t.total),
        ratio(t.dw, t.total),
        ratio(t.db + t.dd + t.dw, t.total),
        ratio(t.db0, t.total),
        ratio(dbn0, t.total),
        ratio(t.db_text, t.text_lines),
        ratio(t.db3_rdata, t.rdata_lines),
        ratio(t.db3_data, t.data_lines),
        ratio(t.db3_idata, t.idata_lines),
        ratio(t.db3, t.total),
        ratio(t.db3_unknown, t.unknown_lines),
        ratio(t.db0, dbn0),
        ratio(t.dd_text, t.text_lines),
        ratio(t.dd_rdata, t.rdata_lines),
        ratio(t.dd_n[0], t.dd),
        ratio(t.dd_n[1], t.dd),
        ratio(t.dd_n[2], t.dd),
        ratio(t.dd_n[0], t.total),
        ratio(t.dd_n[1], t.total),
        ratio(t.dd_n[2], t.total),
        ratio(t.dd_n_unknown[0], t.unknown_lines),
        ratio(t.dd_n_unknown[1], t.unknown_lines),
        ratio(t.dd_n_unknown[2], t.unknown_lines),
    ];
    FeatureBlock {
        category: Category::AsmDd,
        names: DATA_DEFINE_NAMES.iter().map(|n| format!("asm_dd_{n}")).collect(),
        values,
    }
}
