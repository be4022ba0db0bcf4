//! Small helpers shared by the hand-written XML writers.

use std::fmt::Write as _;

/// Returns true for characters that XML 1.0 allows in documents.
pub fn is_xml_char(c: char) -> bool {
    matches!(c,
        '\u{9}' | '\u{A}' | '\u{D}'
        | '\u{20}'..='\u{D7FF}'
        | '\u{E000}'..='\u{FFFD}'
        | '\u{10000}'..='\u{10FFFF}')
}

/// First character outside the XML 1.0 character set, if any.
pub fn first_invalid_char(s: &str) -> Option<char> {
    s.chars().find(|c| !is_xml_char(*c))
}

/// Escapes character data. `\r` is written as a character reference so that
/// parsers do not fold it into `\n` during end-of-line normalization.
pub fn escape_text(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
}

/// Escapes an attribute value delimited by double quotes. Whitespace other
/// than the plain space is referenced so attribute-value normalization keeps it.
pub fn escape_attr(out: &mut String, s: &str) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            _ => out.push(c),
        }
    }
}

/// Appends ` name="value"` with the value escaped.
pub fn push_attr(out: &mut String, name: &str, value: &str) {
    let _ = write!(out, " {name}=\"");
    escape_attr(out, value);
    out.push('"');
}

/// ASCII subset of the XML NCName production: `[A-Za-z_][A-Za-z0-9._-]*`.
pub fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '_'))
}

/// Concatenated text children of an element, or `None` if it has element children.
pub fn text_content(node: roxmltree::Node<'_, '_>) -> Option<String> {
    let mut text = String::new();
    for child in node.children() {
        if child.is_element() {
            return None;
        }
        if child.is_text() {
            text.push_str(child.text().unwrap_or_default());
        }
    }
    Some(text)
}

/// Element children, or `Err(())` if any non-whitespace text sits between them.
pub fn element_children<'a, 'input>(node: roxmltree::Node<'a, 'input>) -> Result<Vec<roxmltree::Node<'a, 'input>>, ()> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or_default().trim().is_empty() {
            return Err(());
        }
    }
    Ok(out)
}

/// Strips a UTF-8 byte-order mark and rejects a declaration naming any
/// encoding other than UTF-8. Returns the (line, column, message) of the problem.
pub fn check_utf8_declaration(doc: &str) -> Result<&str, (u32, u32, String)> {
    let doc = doc.strip_prefix('\u{FEFF}').unwrap_or(doc);
    if let Some(rest) = doc.strip_prefix("<?xml") {
        let Some(end) = rest.find("?>") else {
            return Ok(doc);
        };
        let decl = &rest[..end];
        if let Some(idx) = decl.find("encoding") {
            let after = decl[idx + "encoding".len()..].trim_start();
            if let Some(after) = after.strip_prefix('=') {
                let after = after.trim_start();
                let quote = after.chars().next();
                if let Some(q @ ('"' | '\'')) = quote {
                    let value = &after[1..];
                    if let Some(close) = value.find(q) {
                        let enc = &value[..close];
                        if !enc.eq_ignore_ascii_case("utf-8") && !enc.eq_ignore_ascii_case("utf8") {
                            return Err((1, 1, format!("unsupported encoding {enc:?}")));
                        }
                    }
                }
            }
        }
    }
    Ok(doc)
}

/// Converts a UTF-8 validation failure into a 1-based (line, column).
pub fn utf8_error_position(bytes: &[u8], err: &std::str::Utf8Error) -> (u32, u32) {
    let valid = &bytes[..err.valid_up_to()];
    // the prefix is valid UTF-8 by construction
    let prefix = std::str::from_utf8(valid).unwrap_or_default();
    let line = prefix.matches('\n').count() as u32 + 1;
    let column = prefix.rsplit('\n').next().map(|l| l.chars().count()).unwrap_or(0) as u32 + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup_in_text_and_attributes() {
        let mut t = String::new();
        escape_text(&mut t, "a<b>&c\r\n");
        assert_eq!(t, "a&lt;b&gt;&amp;c&#13;\n");
        let mut a = String::new();
        escape_attr(&mut a, "\"x\"\t\n");
        assert_eq!(a, "&quot;x&quot;&#9;&#10;");
    }

    #[test]
    fn ncname_is_conservative() {
        assert!(is_ncname("getStudent"));
        assert!(is_ncname("_a.b-c9"));
        assert!(!is_ncname("9a"));
        assert!(!is_ncname("a:b"));
        assert!(!is_ncname(""));
    }

    #[test]
    fn declaration_encoding_must_be_utf8() {
        assert!(check_utf8_declaration("<?xml version=\"1.0\" encoding=\"UTF-8\"?><a/>").is_ok());
        assert!(check_utf8_declaration("<a/>").is_ok());
        assert!(check_utf8_declaration("<?xml version='1.0' encoding='ISO-8859-1'?><a/>").is_err());
    }

    #[test]
    fn control_characters_are_not_xml() {
        assert_eq!(first_invalid_char("ok\tfine"), None);
        assert_eq!(first_invalid_char("bad\u{1}"), Some('\u{1}'));
        assert_eq!(first_invalid_char("\u{FFFE}"), Some('\u{FFFE}'));
    }
}
