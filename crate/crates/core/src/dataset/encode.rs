use super::{DatasetError, PuzzleDocument};
use crate::classify::{placeholder, TokenInventory};

/// Each script line as space-separated `<token_i>` placeholders in reading
/// order.
pub fn encode_placeholders(
    doc: &PuzzleDocument,
    inventory: &TokenInventory,
) -> Result<Vec<String>, DatasetError> {
    let map = inventory.class_map();
    doc.script_lines
        .iter()
        .map(|line| {
            let ids = line
                .resolve(inventory)?
                .iter()
                .map(|r| {
                    map.get(r).copied().ok_or_else(|| DatasetError::UnresolvedRef {
                        line_id: line.line_id.clone(),
                        ref_line: r.line_id.clone(),
                        ref_index: r.index,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(ids.into_iter().map(placeholder).collect::<Vec<_>>().join(" "))
        })
        .collect()
}

/// Inverse of [`encode_placeholders`] for one line.
pub fn decode_placeholders(line: &str) -> Result<Vec<usize>, DatasetError> {
    if line.is_empty() {
        return Ok(Vec::new());
    }
    line.split(' ')
        .map(|tok| {
            let digits = tok
                .strip_prefix("<token_")
                .and_then(|t| t.strip_suffix('>'))
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .filter(|d| d.len() == 1 || !d.starts_with('0'))
                .ok_or_else(|| DatasetError::MalformedPlaceholder(tok.to_string()))?;
            digits
                .parse()
                .map_err(|_| DatasetError::MalformedPlaceholder(tok.to_string()))
        })
        .collect()
}
