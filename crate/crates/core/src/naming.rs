//! Alphabetic labels used for generated activity and data-object names.
//!
//! Labels follow the spreadsheet-column sequence: `A`..`Z`, `AA`, `AB`, ...

/// Label for the zero-based `index` (`0 -> "A"`, `25 -> "Z"`, `26 -> "AA"`).
pub fn alpha_label(index: usize) -> String {
    let mut n = index + 1;
    let mut out = Vec::new();
    while n > 0 {
        let rem = (n - 1) % 26;
        out.push(b'A' + rem as u8);
        n = (n - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Inverse of [`alpha_label`]; accepts either case.
pub fn alpha_index(label: &str) -> Option<usize> {
    if label.is_empty() || label.len() > 12 {
        return None;
    }
    let mut n: usize = 0;
    for c in label.chars() {
        let c = c.to_ascii_uppercase();
        if !c.is_ascii_uppercase() {
            return None;
        }
        n = n * 26 + (c as usize - 'A' as usize + 1);
    }
    Some(n - 1)
}

pub const ACTIVITY_PREFIX: &str = "Activity ";
pub const VARIABLE_PREFIX: &str = "variable_";

pub fn activity_name(index: usize) -> String {
    format!("{ACTIVITY_PREFIX}{}", alpha_label(index))
}

pub fn variable_name(index: usize) -> String {
    format!("{VARIABLE_PREFIX}{}", alpha_label(index).to_ascii_lowercase())
}

/// Position of a generated activity name in the naming sequence, if it is one.
pub fn activity_index(name: &str) -> Option<usize> {
    name.strip_prefix(ACTIVITY_PREFIX).and_then(alpha_index)
}

pub fn variable_index(name: &str) -> Option<usize> {
    name.strip_prefix(VARIABLE_PREFIX).and_then(alpha_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_continue_past_z() {
        assert_eq!(alpha_label(0), "A");
        assert_eq!(alpha_label(25), "Z");
        assert_eq!(alpha_label(26), "AA");
        assert_eq!(alpha_label(27), "AB");
        assert_eq!(alpha_label(26 + 26 * 26), "AAA");
        assert_eq!(activity_name(1), "Activity B");
        assert_eq!(variable_name(2), "variable_c");
    }

    #[test]
    fn index_inverts_label() {
        for i in 0..2000 {
            assert_eq!(alpha_index(&alpha_label(i)), Some(i));
        }
        assert_eq!(activity_index("Activity AA"), Some(26));
        assert_eq!(activity_index("Register order"), None);
        assert_eq!(variable_index("variable_b"), Some(1));
    }
}
