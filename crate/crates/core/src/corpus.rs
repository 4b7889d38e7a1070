//! Dataset ingestion: the label manifest and the two per-sample views
//! (hex dump and IDA-style assembly listing).

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Number of malware families in the reference dataset.
pub const DEFAULT_NUM_CLASSES: usize = 9;

/// Section name given to lines that carry no `SECTION:ADDRESS` prefix.
pub const UNKNOWN_SECTION: &str = "UNKNOWN";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleId(String);

impl SampleId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.trim().is_empty() {
            return Err(Error::Validation("empty sample id".into()));
        }
        Ok(SampleId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SampleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: SampleId,
    pub label: Option<usize>,
    pub hex_path: PathBuf,
    pub asm_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub num_classes: usize,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labeled(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(|e| e.label.is_some())
    }
}

/// Loads a manifest assuming the reference dataset's 9 classes.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    load_manifest_with_classes(path, DEFAULT_NUM_CLASSES)
}

/// Loads `id,label,hex_path,asm_path` rows. Relative paths resolve against
/// the manifest's directory; an empty label field marks an unlabeled sample.
pub fn load_manifest_with_classes(path: impl AsRef<Path>, num_classes: usize) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let ctx = path.display().to_string();

    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    let mut header_seen = false;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if !header_seen {
            if cols != ["id", "label", "hex_path", "asm_path"] {
                return Err(Error::parse(
                    ctx,
                    lineno,
                    "expected header `id,label,hex_path,asm_path`",
                ));
            }
            header_seen = true;
            continue;
        }
        if cols.len() != 4 {
            return Err(Error::parse(
                ctx,
                lineno,
                format!("expected 4 columns, found {}", cols.len()),
            ));
        }
        let id = SampleId::new(cols[0]).map_err(|e| Error::parse(&ctx, lineno, e.to_string()))?;
        let label = if cols[1].is_empty() {
            None
        } else {
            let l: usize = cols[1]
                .parse()
                .map_err(|_| Error::parse(&ctx, lineno, format!("bad label {:?}", cols[1])))?;
            if l >= num_classes {
                return Err(Error::Validation(format!(
                    "{ctx}: line {lineno}: label {l} outside 0..{num_classes}"
                )));
            }
            Some(l)
        };
        let hex_path = base.join(cols[2]);
        let asm_path = base.join(cols[3]);
        for p in [&hex_path, &asm_path] {
            if !p.exists() {
                return Err(Error::Validation(format!(
                    "{ctx}: line {lineno}: missing file {}",
                    p.display()
                )));
            }
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Validation(format!(
                "{ctx}: line {lineno}: duplicate sample id {id}"
            )));
        }
        entries.push(ManifestEntry {
            id,
            label,
            hex_path,
            asm_path,
        });
    }
    Ok(Manifest { num_classes, entries })
}

/// Writes a manifest in the format [`load_manifest`] reads.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[(String, Option<usize>, String, String)]) -> Result<()> {
    let mut out = String::from("id,label,hex_path,asm_path\n");
    for (id, label, hex, asm) in entries {
        let label = label.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{id},{label},{hex},{asm}");
    }
    fs::write(path.as_ref(), out).map_err(|e| Error::io(path.as_ref(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ByteCell {
    Defined(u8),
    Undefined,
}

impl ByteCell {
    pub fn value(self) -> Option<u8> {
        match self {
            ByteCell::Defined(v) => Some(v),
            ByteCell::Undefined => None,
        }
    }
}

/// Parsed hex view of an executable.
#[derive(Debug, Clone, PartialEq)]
pub struct HexDump {
    pub start_address: u64,
    pub bytes: Vec<ByteCell>,
    pub file_size_bytes: u64,
    /// Non-fatal oddities, e.g. addresses that go backwards.
    pub warnings: Vec<String>,
}

impl HexDump {
    pub fn defined_bytes(&self) -> impl Iterator<Item = u8> + '_ {
        self.bytes.iter().filter_map(|c| c.value())
    }

    /// Defined bytes with `??` mapped to 0, as used for imaging.
    pub fn bytes_zero_filled(&self) -> Vec<u8> {
        self.bytes.iter().map(|c| c.value().unwrap_or(0)).collect()
    }

    /// Renders the dump back to the dataset text format, `width` cells per line.
    pub fn to_hex_text(&self, width: usize) -> String {
        let width = width.max(1);
        let mut out = String::with_capacity(self.bytes.len() * 3 + self.bytes.len() / width * 10);
        for (i, chunk) in self.bytes.chunks(width).enumerate() {
            let _ = write!(out, "{:08X}", self.start_address + (i * width) as u64);
            for cell in chunk {
                match cell {
                    ByteCell::Defined(v) => {
                        let _ = write!(out, " {v:02X}");
                    }
                    ByteCell::Undefined => out.push_str(" ??"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn parse_hex(path: impl AsRef<Path>) -> Result<HexDump> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_hex_bytes(&bytes, &path.display().to_string())
}

/// Parses hex-dump text; `context` names the source in error messages.
pub fn parse_hex_bytes(raw: &[u8], context: &str) -> Result<HexDump> {
    let text = String::from_utf8_lossy(raw);
    let mut start_address = None;
    let mut last_address: Option<u64> = None;
    let mut cells = Vec::with_capacity(raw.len() / 3);
    let mut warnings = Vec::new();

    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut toks = line.split_ascii_whitespace();
        let Some(addr_tok) = toks.next() else { continue };
        let address = u64::from_str_radix(addr_tok, 16)
            .map_err(|_| Error::parse(context, lineno, format!("bad address {addr_tok:?}")))?;
        if let Some(prev) = last_address {
            if address <= prev {
                warnings.push(format!("line {lineno}: address {address:#x} does not follow {prev:#x}"));
            }
        }
        last_address = Some(address);
        start_address.get_or_insert(address);

        let before = cells.len();
        for tok in toks {
            cells
                .push(parse_cell(tok).ok_or_else(|| Error::parse(context, lineno, format!("bad byte token {tok:?}")))?);
        }
        let n = cells.len() - before;
        if n == 0 || n > 16 {
            return Err(Error::parse(
                context,
                lineno,
                format!("expected 1..16 byte tokens, found {n}"),
            ));
        }
    }

    let Some(start_address) = start_address else {
        return Err(Error::parse(context, 0, "no byte lines"));
    };
    Ok(HexDump {
        start_address,
        bytes: cells,
        file_size_bytes: raw.len() as u64,
        warnings,
    })
}

fn parse_cell(tok: &str) -> Option<ByteCell> {
    if tok == "??" {
        return Some(ByteCell::Undefined);
    }
    let b = tok.as_bytes();
    if b.len() != 2 || !b.iter().all(u8::is_ascii_hexdigit) {
        return None;
    }
    u8::from_str_radix(tok, 16).ok().map(ByteCell::Defined)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmLine {
    pub section: String,
    pub address: Option<u64>,
    pub raw: String,
    /// Whitespace-separated tokens after the `SECTION:ADDRESS` prefix
    /// (the whole line for unprefixed lines).
    pub tokens: Vec<String>,
    pub opcode: Option<String>,
}

impl AsmLine {
    /// Tokens after the opcode, up to a `;` comment.
    pub fn operands(&self) -> &[String] {
        let Some(op) = &self.opcode else { return &[] };
        let start = self.tokens.iter().position(|t| t == op).map_or(0, |p| p + 1);
        let rest = &self.tokens[start..];
        let end = rest.iter().position(|t| t.starts_with(';')).unwrap_or(rest.len());
        &rest[..end]
    }

    pub fn is_unknown_section(&self) -> bool {
        self.section == UNKNOWN_SECTION
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsmListing {
    pub lines: Vec<AsmLine>,
    pub file_size_bytes: u64,
    pub line_count: usize,
}

impl AsmListing {
    pub fn opcodes(&self) -> impl Iterator<Item = &str> {
        self.lines.iter().filter_map(|l| l.opcode.as_deref())
    }
}

pub fn parse_asm(path: impl AsRef<Path>) -> Result<AsmListing> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_asm_bytes(&bytes))
}

/// Lexical parse of an IDA listing. Invalid UTF-8 is replaced, never fatal.
pub fn parse_asm_bytes(raw: &[u8]) -> AsmListing {
    let text = String::from_utf8_lossy(raw);
    let lines: Vec<AsmLine> = text.lines().map(parse_asm_line).collect();
    AsmListing {
        line_count: lines.len(),
        lines,
        file_size_bytes: raw.len() as u64,
    }
}

pub fn parse_asm_line(line: &str) -> AsmLine {
    let raw = line.trim_end_matches('\r').to_string();
    let trimmed = raw.trim_start();
    let first_end = trimmed.find(char::is_whitespace).unwrap_or(trimmed.len());
    let first = &trimmed[..first_end];

    let prefix = first.split_once(':').and_then(|(sec, addr)| {
        let ok = !sec.is_empty() && !addr.is_empty() && addr.bytes().all(|b| b.is_ascii_hexdigit());
        ok.then(|| (sec.to_string(), u64::from_str_radix(addr, 16).ok()))
    });

    match prefix {
        Some((section, address)) => {
            let tokens: Vec<String> = trimmed[first_end..].split_whitespace().map(str::to_string).collect();
            let opcode = find_opcode(&tokens);
            AsmLine {
                section,
                address,
                raw,
                tokens,
                opcode,
            }
        }
        None => AsmLine {
            section: UNKNOWN_SECTION.to_string(),
            address: None,
            tokens: trimmed.split_whitespace().map(str::to_string).collect(),
            raw,
            opcode: None,
        },
    }
}

/// Raw instruction bytes as IDA prints them: two uppercase hex digits,
/// optionally followed by `+` when the byte column is truncated.
fn is_byte_column(tok: &str) -> bool {
    let t = tok.strip_suffix('+').unwrap_or(tok);
    t.len() == 2 && t.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
}

/// The first token after the byte columns is the opcode iff it is purely
/// lowercase alphabetic.
fn find_opcode(tokens: &[String]) -> Option<String> {
    let tok = tokens.iter().find(|t| !is_byte_column(t))?;
    (tok.bytes().all(|b| b.is_ascii_lowercase())).then(|| tok.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_single_line() {
        let d = parse_hex_bytes(b"00401000 4D 5A ?? 00\n", "t").unwrap();
        assert_eq!(d.start_address, 0x401000);
        assert_eq!(
            d.bytes,
            vec![
                ByteCell::Defined(0x4D),
                ByteCell::Defined(0x5A),
                ByteCell::Undefined,
                ByteCell::Defined(0)
            ]
        );
    }

    #[test]
    fn hex_two_full_lines() {
        let line = |a: u32| {
            let mut s = format!("{a:08X}");
            for i in 0..16 {
                s.push_str(&format!(" {i:02x}"));
            }
            s
        };
        let text = format!("{}\n{}\n", line(0x1000), line(0x1010));
        let d = parse_hex_bytes(text.as_bytes(), "t").unwrap();
        assert_eq!(d.bytes.len(), 32);
        assert!(d.warnings.is_empty());
    }

    #[test]
    fn hex_rejects_bad_token() {
        let err = parse_hex_bytes(b"00401000 4D GZ\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        assert!(parse_hex_bytes(b"", "t").is_err());
        assert!(parse_hex_bytes(b"00401000\n", "t").is_err());
    }

    #[test]
    fn hex_backwards_address_is_a_warning() {
        let d = parse_hex_bytes(b"00000010 01\n00000000 02\n", "t").unwrap();
        assert_eq!(d.bytes.len(), 2);
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn asm_instruction_line() {
        let l = parse_asm_line(".text:00401000 55 push ebp");
        assert_eq!(l.section, ".text");
        assert_eq!(l.address, Some(0x401000));
        assert_eq!(l.opcode.as_deref(), Some("push"));
        assert!(l.tokens.iter().any(|t| t == "ebp"));
        assert_eq!(l.operands(), ["ebp".to_string()]);
    }

    #[test]
    fn asm_data_define_line() {
        let l = parse_asm_line(".data:00402000 db 4Fh");
        assert_eq!(l.section, ".data");
        assert_eq!(l.opcode.as_deref(), Some("db"));
    }

    #[test]
    fn asm_comment_and_labels() {
        let l = parse_asm_line("; Segment type: Pure code");
        assert_eq!(l.section, UNKNOWN_SECTION);
        assert_eq!(l.opcode, None);

        let l = parse_asm_line(".text:00401000 sub_401000 proc near");
        assert_eq!(l.opcode, None);

        let l = parse_asm_line(".text:00401005 E8 12 34 56+ call sub_401000 ; x");
        assert_eq!(l.opcode.as_deref(), Some("call"));
        assert_eq!(l.operands(), ["sub_401000".to_string()]);

        let l = parse_asm_line("UPX1:00410000");
        assert_eq!(l.section, "UPX1");
        assert_eq!(l.opcode, None);
    }

    #[test]
    fn asm_invalid_utf8_is_tolerated() {
        let raw = b".text:00401000 55 push ebp\n.rdata:00402000 db \xff\xfe\n";
        let listing = parse_asm_bytes(raw);
        assert_eq!(listing.line_count, 2);
        assert_eq!(listing.lines[1].section, ".rdata");
        assert_eq!(listing.file_size_bytes, raw.len() as u64);
    }
}
