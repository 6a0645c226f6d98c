//! Line-oriented text serialization of [`SampleMultiset`]s.
//!
//! ```text
//! # derand v1 kind=bias alphabet=2 n=4 count=3 params=eps=2/5,n=4
//! 0110
//! 1011
//! 0000
//! ```
//!
//! Binary words are written as `0`/`1` characters; larger alphabets as
//! space-separated decimal symbols.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::sample::{Alphabet, Provenance, SampleMultiset};
use crate::{Error, Result};

pub const MAGIC: &str = "# derand v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub alphabet: u32,
    pub n: usize,
    pub count: usize,
    pub params: BTreeMap<String, String>,
}

pub fn render(kind: &str, set: &SampleMultiset) -> String {
    let mut params = set.provenance.params.clone();
    if let Some(d) = &set.provenance.trace_digest {
        params.insert("trace".into(), d.clone());
    }
    let params = params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",");
    let mut out = String::with_capacity(set.len() * (set.word_length() + 1) + 96);
    let _ = writeln!(
        out,
        "{MAGIC} kind={kind} alphabet={} n={} count={} params={params}",
        set.alphabet().size(),
        set.word_length(),
        set.len()
    );
    for word in set.words() {
        match set.alphabet() {
            Alphabet::Binary => out.extend(word.iter().map(|&b| if b == 0 { '0' } else { '1' })),
            Alphabet::Qary(_) => {
                for (i, s) in word.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{s}");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn parse_header(line: &str) -> Result<Header> {
    let rest = line
        .strip_prefix(MAGIC)
        .ok_or_else(|| parse_err(1, format!("expected header starting with {MAGIC:?}")))?;
    let mut fields = BTreeMap::new();
    for token in rest.split_whitespace() {
        let (k, v) = token
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed header field {token:?}")))?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).ok_or_else(|| parse_err(1, format!("header lacks {k}=")));
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| parse_err(1, format!("header field {k} is not a number")))
    };
    let mut params = BTreeMap::new();
    let raw = fields.get("params").map(String::as_str).unwrap_or("");
    for pair in raw.split(',').filter(|p| !p.is_empty()) {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| parse_err(1, format!("malformed parameter {pair:?}")))?;
        params.insert(k.to_string(), v.to_string());
    }
    let alphabet = num("alphabet")?;
    if alphabet < 2 || alphabet > u32::MAX as usize {
        return Err(parse_err(1, "alphabet must be at least 2"));
    }
    Ok(Header {
        kind: get("kind")?.clone(),
        alphabet: alphabet as u32,
        n: num("n")?,
        count: num("count")?,
        params,
    })
}

pub fn parse(text: &str) -> Result<(Header, SampleMultiset)> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let header = parse_header(first)?;
    let alphabet = Alphabet::from_size(header.alphabet);
    let mut set = SampleMultiset::new(alphabet, header.n);
    let mut word = Vec::with_capacity(header.n);
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        word.clear();
        match alphabet {
            Alphabet::Binary => {
                for c in line.trim().chars() {
                    match c {
                        '0' => word.push(0),
                        '1' => word.push(1),
                        _ => return Err(parse_err(lineno, format!("unexpected character {c:?}"))),
                    }
                }
            }
            Alphabet::Qary(_) => {
                for tok in line.split_whitespace() {
                    word.push(tok.parse().map_err(|_| parse_err(lineno, format!("bad symbol {tok:?}")))?);
                }
            }
        }
        set.push(&word).map_err(|e| parse_err(lineno, e.to_string()))?;
    }
    if set.len() != header.count {
        return Err(parse_err(
            0,
            format!("header declares {} words, found {}", header.count, set.len()),
        ));
    }
    let mut provenance = Provenance::new(header.kind.clone());
    provenance.params = header.params.clone();
    provenance.trace_digest = provenance.params.remove("trace");
    set.provenance = provenance;
    Ok((header, set))
}

/// Hex SHA-256 of a byte string.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let set = SampleMultiset::from_words(Alphabet::Binary, 3, [[0, 1, 1], [1, 0, 0]])
            .unwrap()
            .with_provenance(Provenance::new("x").with("n", 3).with("eps", "1/2"));
        let text = render("bias", &set);
        assert!(text.starts_with("# derand v1 kind=bias alphabet=2 n=3 count=2 params=eps=1/2,n=3\n"));
        assert!(text.ends_with("011\n100\n"));
        let (h, back) = parse(&text).unwrap();
        assert_eq!(h.kind, "bias");
        assert_eq!(back.words().collect::<Vec<_>>(), set.words().collect::<Vec<_>>());
    }

    #[test]
    fn qary_round_trip() {
        let set = SampleMultiset::from_words(Alphabet::Qary(37), 2, [[36, 0], [5, 12]]).unwrap();
        let text = render("phf", &set);
        assert!(text.contains("\n36 0\n5 12\n"));
        let (_, back) = parse(&text).unwrap();
        assert_eq!(back.word(1), &[5, 12]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse(""), Err(Error::Parse { .. })));
        assert!(matches!(parse("hello\n"), Err(Error::Parse { .. })));
        let bad_count = "# derand v1 kind=x alphabet=2 n=2 count=2 params=\n01\n";
        assert!(matches!(parse(bad_count), Err(Error::Parse { .. })));
        let bad_char = "# derand v1 kind=x alphabet=2 n=2 count=1 params=\n0x\n";
        assert!(matches!(parse(bad_char), Err(Error::Parse { line: 2, .. })));
        let bad_len = "# derand v1 kind=x alphabet=2 n=2 count=1 params=\n011\n";
        assert!(matches!(parse(bad_len), Err(Error::Parse { line: 2, .. })));
        let bad_symbol = "# derand v1 kind=x alphabet=3 n=1 count=1 params=\n3\n";
        assert!(matches!(parse(bad_symbol), Err(Error::Parse { line: 2, .. })));
    }
}
