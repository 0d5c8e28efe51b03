//! Class ids 1..=14 and their Malayalam district names.
//!
//! Codepoint sequences are reproduced exactly as tabulated, including the
//! entries that differ from canonical spelling (ids 1, 11 and 13).

use thiserror::Error;

pub type ClassId = usize;

pub const NUM_CLASSES: usize = 14;

/// Shipped table: `id \t hex codepoints \t rendered string`, one line per class.
pub const TABLE_TSV: &str = include_str!("../data/district_table.tsv");

const DISTRICTS: [&[u32]; NUM_CLASSES] = [
    &[0x0D15, 0x0D3E, 0x0D38, 0x0D7C, 0x0D15, 0x0D4B, 0x0D1F, 0x0D4D],
    &[0x0D15, 0x0D23, 0x0D4D, 0x0D23, 0x0D42, 0x0D7C],
    &[0x0D35, 0x0D2F, 0x0D28, 0x0D3E, 0x0D1F, 0x0D4D],
    &[
        0x0D15, 0x0D4B, 0x0D34, 0x0D3F, 0x0D15, 0x0D4D, 0x0D15, 0x0D4B, 0x0D1F, 0x0D4D,
    ],
    &[0x0D2E, 0x0D32, 0x0D2A, 0x0D4D, 0x0D2A, 0x0D41, 0x0D31, 0x0D02],
    &[0x0D0E, 0x0D31, 0x0D23, 0x0D3E, 0x0D15, 0x0D41, 0x0D33, 0x0D02],
    &[0x0D07, 0x0D1F, 0x0D41, 0x0D15, 0x0D4D, 0x0D15, 0x0D3F],
    &[0x0D15, 0x0D4B, 0x0D1F, 0x0D4D, 0x0D1F, 0x0D2F, 0x0D02],
    &[
        0x0D2A, 0x0D24, 0x0D4D, 0x0D24, 0x0D28, 0x0D02, 0x0D24, 0x0D3F, 0x0D1F, 0x0D4D, 0x0D1F,
    ],
    &[
        0x0D24, 0x0D3F, 0x0D30, 0x0D41, 0x0D35, 0x0D28, 0x0D28, 0x0D4D, 0x0D24, 0x0D2A, 0x0D41, 0x0D30, 0x0D02,
    ],
    &[0x0D06, 0x0D32, 0x0D2A, 0x0D4D, 0x0D2A, 0x0D42, 0x0D34],
    &[0x0D2A, 0x0D3E, 0x0D32, 0x0D15, 0x0D4D, 0x0D15, 0x0D3E, 0x0D1F, 0x0D4D],
    &[0x0D24, 0x0D43, 0x0D36, 0x0D42, 0x0D7C],
    &[0x0D15, 0x0D4A, 0x0D32, 0x0D4D, 0x0D32, 0x0D02],
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("class id {0} outside 1..={NUM_CLASSES}")]
    OutOfRange(usize),
    #[error("unknown district name {name:?}; nearest: {}", nearest.iter().map(|(id, s)| format!("{id} {s}")).collect::<Vec<_>>().join(", "))]
    Unknown {
        name: String,
        nearest: Vec<(ClassId, String)>,
    },
}

/// Codepoints for a class id.
pub fn codepoints(id: ClassId) -> Result<&'static [u32], LabelError> {
    if !(1..=NUM_CLASSES).contains(&id) {
        return Err(LabelError::OutOfRange(id));
    }
    Ok(DISTRICTS[id - 1])
}

fn render(cps: &[u32]) -> String {
    cps.iter()
        .map(|&c| char::from_u32(c).expect("table holds valid scalar values"))
        .collect()
}

pub fn label_to_unicode(id: ClassId) -> Result<String, LabelError> {
    codepoints(id).map(render)
}

fn edit_distance(a: &[char], b: &[char]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn unicode_to_label(s: &str) -> Result<ClassId, LabelError> {
    let query: Vec<char> = s.chars().collect();
    let mut scored = Vec::with_capacity(NUM_CLASSES);
    for (i, cps) in DISTRICTS.iter().enumerate() {
        let name = render(cps);
        if name == s {
            return Ok(i + 1);
        }
        let cand: Vec<char> = name.chars().collect();
        scored.push((edit_distance(&query, &cand), i + 1, name));
    }
    scored.sort();
    Err(LabelError::Unknown {
        name: s.to_string(),
        nearest: scored.into_iter().take(3).map(|(_, id, n)| (id, n)).collect(),
    })
}

/// The table in its shipped text form.
pub fn render_table() -> String {
    let mut out = String::new();
    for (i, cps) in DISTRICTS.iter().enumerate() {
        let hex: Vec<String> = cps.iter().map(|c| format!("{c:04X}")).collect();
        out.push_str(&format!("{}\t{}\t{}\n", i + 1, hex.join(" "), render(cps)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_sequences() {
        assert_eq!(
            codepoints(14).unwrap(),
            &[0x0D15, 0x0D4A, 0x0D32, 0x0D4D, 0x0D32, 0x0D02]
        );
        assert_eq!(label_to_unicode(14).unwrap(), "കൊല്ലം");
        assert_eq!(codepoints(13).unwrap(), &[0x0D24, 0x0D43, 0x0D36, 0x0D42, 0x0D7C]);
        assert_eq!(
            codepoints(1).unwrap(),
            &[0x0D15, 0x0D3E, 0x0D38, 0x0D7C, 0x0D15, 0x0D4B, 0x0D1F, 0x0D4D]
        );
    }

    #[test]
    fn table_invariants() {
        let mut seen = std::collections::HashSet::new();
        for id in 1..=NUM_CLASSES {
            let cps = codepoints(id).unwrap();
            assert!(cps.iter().all(|c| (0x0D00..=0x0D7F).contains(c)));
            assert!(seen.insert(cps));
            assert_eq!(unicode_to_label(&label_to_unicode(id).unwrap()).unwrap(), id);
        }
    }

    #[test]
    fn out_of_range_and_unknown() {
        assert_eq!(codepoints(0), Err(LabelError::OutOfRange(0)));
        assert_eq!(codepoints(15), Err(LabelError::OutOfRange(15)));
        match unicode_to_label("") {
            Err(LabelError::Unknown { nearest, .. }) => assert_eq!(nearest.len(), 3),
            other => panic!("{other:?}"),
        }
        // One codepoint off from id 14: nearest candidate is 14.
        match unicode_to_label("കൊല്ല") {
            Err(LabelError::Unknown { nearest, .. }) => assert_eq!(nearest[0].0, 14),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn shipped_file_matches_table() {
        assert_eq!(render_table(), TABLE_TSV);
    }
}
