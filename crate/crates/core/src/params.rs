//! Parser for the small `name(key=value,...)` call syntax shared by family,
//! estimator and rule strings.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("malformed parameter string `{0}`")]
    Malformed(String),
    #[error("parameter `{key}` expects a number, got `{value}`")]
    NotANumber { key: String, value: String },
}

/// A parsed `name(args)` expression. Arguments are kept as raw strings;
/// a bare segment after `key=value` is folded into that value, so
/// `clamped=1,2` yields the single argument `("clamped", "1,2")`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamList {
    pub name: String,
    /// `(key, value)`; positional arguments have an empty key.
    pub args: Vec<(String, String)>,
}

impl ParamList {
    pub fn parse(text: &str) -> Result<Self, ParamError> {
        let malformed = || ParamError::Malformed(text.to_string());
        let s = text.trim();
        let Some(open) = s.find('(') else {
            if s.is_empty() || s.contains(')') {
                return Err(malformed());
            }
            return Ok(Self {
                name: s.to_string(),
                args: Vec::new(),
            });
        };
        if !s.ends_with(')') {
            return Err(malformed());
        }
        let name = s[..open].trim();
        let inner = &s[open + 1..s.len() - 1];
        if name.is_empty() {
            return Err(malformed());
        }
        let mut args: Vec<(String, String)> = Vec::new();
        for segment in split_top_level(inner).ok_or_else(malformed)? {
            let segment = segment.trim();
            if segment.is_empty() {
                if inner.trim().is_empty() {
                    continue;
                }
                return Err(malformed());
            }
            match top_level_eq(segment) {
                Some(eq) => {
                    let key = segment[..eq].trim();
                    if key.is_empty() {
                        return Err(malformed());
                    }
                    args.push((key.to_string(), segment[eq + 1..].trim().to_string()));
                }
                None => match args.last_mut() {
                    Some((key, value)) if !key.is_empty() => {
                        value.push(',');
                        value.push_str(segment);
                    }
                    _ => args.push((String::new(), segment.to_string())),
                },
            }
        }
        Ok(Self {
            name: name.to_string(),
            args,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.args
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>, ParamError> {
        self.get(key).map(|v| parse_number(key, v)).transpose()
    }

    pub fn numbers(&self, key: &str) -> Result<Option<Vec<f64>>, ParamError> {
        self.get(key)
            .map(|v| v.split(',').map(|p| parse_number(key, p.trim())).collect())
            .transpose()
    }
}

fn parse_number(key: &str, v: &str) -> Result<f64, ParamError> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ParamError::NotANumber {
            key: key.to_string(),
            value: v.to_string(),
        })
}

/// Splits on commas that are not nested in parentheses; `None` when the
/// parentheses are unbalanced.
pub fn split_top_level(s: &str) -> Option<Vec<&str>> {
    let mut depth = 0i32;
    let mut start = 0;
    let mut out = Vec::new();
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return None;
                }
            }
            ',' if depth == 0 => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    if depth != 0 {
        return None;
    }
    out.push(&s[start..]);
    Some(out)
}

fn top_level_eq(s: &str) -> Option<usize> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            '=' if depth == 0 => return Some(i),
            _ => {}
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_name() {
        let p = ParamList::parse("ml_plugin").unwrap();
        assert_eq!(p.name, "ml_plugin");
        assert!(p.args.is_empty());
    }

    #[test]
    fn keyed_and_folded() {
        let p = ParamList::parse("plugin(clamped=1.5,6)").unwrap();
        assert_eq!(p.args, vec![("clamped".into(), "1.5,6".into())]);
        assert_eq!(p.numbers("clamped").unwrap(), Some(vec![1.5, 6.0]));
        let p = ParamList::parse("smoothed_ml(x0=1, n0=2)").unwrap();
        assert_eq!(p.number("n0").unwrap(), Some(2.0));
    }

    #[test]
    fn nested_positional() {
        let p = ParamList::parse("plugin(smoothed_ml(x0=1,n0=10))").unwrap();
        assert_eq!(
            p.args,
            vec![(String::new(), "smoothed_ml(x0=1,n0=10)".into())]
        );
    }

    #[test]
    fn malformed() {
        assert!(ParamList::parse("a(b=1").is_err());
        assert!(ParamList::parse("(b=1)").is_err());
        assert!(ParamList::parse("a(=1)").is_err());
        assert!(ParamList::parse("").is_err());
        assert!(matches!(
            ParamList::parse("a(x=foo)").unwrap().number("x"),
            Err(ParamError::NotANumber { .. })
        ));
    }

    #[test]
    fn split_respects_nesting() {
        assert_eq!(
            split_top_level("a,b(c,d),e").unwrap(),
            vec!["a", "b(c,d)", "e"]
        );
        assert!(split_top_level("a)").is_none());
    }
}
