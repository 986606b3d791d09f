//! Recursive Length Prefix encoding, strict canonical form.
//!
//! Decoding is strict: non-minimal length prefixes and single bytes wrapped
//! in a string header are rejected, as Ethereum consensus code does.

use thiserror::Error;

#[derive(Clone, PartialEq, Eq, Hash)]
pub enum RlpItem {
    Bytes(Vec<u8>),
    List(Vec<RlpItem>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RlpError {
    #[error("payload of {0} bytes exceeds the 2^64-1 RLP limit")]
    EncodingOverflow(u128),
    #[error("malformed rlp: {0}")]
    Malformed(&'static str),
    #[error("non-canonical rlp: {0}")]
    NonCanonical(&'static str),
    #[error("{0} trailing bytes after rlp item")]
    TrailingData(usize),
}

impl std::fmt::Debug for RlpItem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RlpItem::Bytes(b) => write!(f, "{}", crate::hex::encode(b)),
            RlpItem::List(items) => f.debug_list().entries(items).finish(),
        }
    }
}

impl RlpItem {
    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        RlpItem::Bytes(b.into())
    }

    /// Minimal big-endian integer encoding: zero is the empty string.
    pub fn uint(be_bytes: &[u8]) -> Self {
        let first = be_bytes.iter().position(|&b| b != 0).unwrap_or(be_bytes.len());
        RlpItem::Bytes(be_bytes[first..].to_vec())
    }

    pub fn u64(v: u64) -> Self {
        RlpItem::uint(&v.to_be_bytes())
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            RlpItem::Bytes(b) => Some(b),
            RlpItem::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[RlpItem]> {
        match self {
            RlpItem::List(items) => Some(items),
            RlpItem::Bytes(_) => None,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        encode_into(self, &mut out);
        out
    }

    pub fn encoded_len(&self) -> usize {
        let payload = self.payload_len();
        match self {
            RlpItem::Bytes(b) if b.len() == 1 && b[0] < 0x80 => 1,
            _ => header_len(payload) + payload,
        }
    }

    fn payload_len(&self) -> usize {
        match self {
            RlpItem::Bytes(b) => b.len(),
            RlpItem::List(items) => items.iter().map(RlpItem::encoded_len).sum(),
        }
    }
}

fn header_len(payload: usize) -> usize {
    if payload < 56 {
        1
    } else {
        1 + be_len(payload as u64)
    }
}

fn be_len(v: u64) -> usize {
    8 - (v.leading_zeros() / 8) as usize
}

fn push_header(out: &mut Vec<u8>, short_base: u8, long_base: u8, len: usize) {
    if len < 56 {
        out.push(short_base + len as u8);
    } else {
        let n = be_len(len as u64);
        out.push(long_base + n as u8);
        out.extend_from_slice(&(len as u64).to_be_bytes()[8 - n..]);
    }
}

fn encode_into(item: &RlpItem, out: &mut Vec<u8>) {
    match item {
        RlpItem::Bytes(b) if b.len() == 1 && b[0] < 0x80 => out.push(b[0]),
        RlpItem::Bytes(b) => {
            push_header(out, 0x80, 0xb7, b.len());
            out.extend_from_slice(b);
        }
        RlpItem::List(items) => {
            let payload = item.payload_len();
            push_header(out, 0xc0, 0xf7, payload);
            for i in items {
                encode_into(i, out);
            }
        }
    }
}

/// Wraps already-encoded items in a list header.
pub fn encode_list_of_encoded(parts: &[&[u8]]) -> Vec<u8> {
    let payload: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = Vec::with_capacity(header_len(payload) + payload);
    push_header(&mut out, 0xc0, 0xf7, payload);
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}

/// Encodes `item`, refusing payloads that cannot be length-prefixed.
pub fn encode(item: &RlpItem) -> Result<Vec<u8>, RlpError> {
    let payload = item.payload_len() as u128;
    if payload > u64::MAX as u128 {
        return Err(RlpError::EncodingOverflow(payload));
    }
    Ok(item.encode())
}

/// Decodes exactly one item spanning all of `bytes`.
pub fn decode(bytes: &[u8]) -> Result<RlpItem, RlpError> {
    let (item, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(RlpError::TrailingData(bytes.len() - used));
    }
    Ok(item)
}

/// Decodes one item from the front of `bytes`, returning it with the number
/// of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(RlpItem, usize), RlpError> {
    let (is_list, offset, len) = parse_header(bytes)?;
    let end = offset
        .checked_add(len)
        .filter(|&e| e <= bytes.len())
        .ok_or(RlpError::Malformed("payload runs past end of input"))?;
    let payload = &bytes[offset..end];
    if !is_list {
        if len == 1 && offset == 1 && payload[0] < 0x80 {
            return Err(RlpError::NonCanonical("single byte below 0x80 wrapped in header"));
        }
        let item = if offset == 0 {
            RlpItem::Bytes(vec![bytes[0]])
        } else {
            RlpItem::Bytes(payload.to_vec())
        };
        return Ok((item, end));
    }
    let mut items = Vec::new();
    let mut rest = payload;
    while !rest.is_empty() {
        let (item, used) = decode_prefix(rest)?;
        items.push(item);
        rest = &rest[used..];
    }
    Ok((RlpItem::List(items), end))
}

/// Returns (is_list, payload offset, payload length).
fn parse_header(bytes: &[u8]) -> Result<(bool, usize, usize), RlpError> {
    let &first = bytes.first().ok_or(RlpError::Malformed("empty input"))?;
    match first {
        0x00..=0x7f => Ok((false, 0, 1)),
        0x80..=0xb7 => Ok((false, 1, (first - 0x80) as usize)),
        0xb8..=0xbf => {
            let n = (first - 0xb7) as usize;
            Ok((false, 1 + n, long_len(bytes, n)?))
        }
        0xc0..=0xf7 => Ok((true, 1, (first - 0xc0) as usize)),
        0xf8..=0xff => {
            let n = (first - 0xf7) as usize;
            Ok((true, 1 + n, long_len(bytes, n)?))
        }
    }
}

fn long_len(bytes: &[u8], n: usize) -> Result<usize, RlpError> {
    let len_bytes = bytes
        .get(1..1 + n)
        .ok_or(RlpError::Malformed("truncated length prefix"))?;
    if len_bytes[0] == 0 {
        return Err(RlpError::NonCanonical("length prefix has leading zero"));
    }
    let len = len_bytes.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64);
    if len < 56 {
        return Err(RlpError::NonCanonical("long form used for length below 56"));
    }
    usize::try_from(len).map_err(|_| RlpError::Malformed("length does not fit in memory"))
}
