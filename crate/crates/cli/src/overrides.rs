//! `--set key=value` handling on top of a parsed scenario document.
//!
//! Keys are dotted paths into the scenario, with array elements addressed as
//! `offset[0]` or `offset.0`. Values use scenario-file syntax; anything that
//! does not parse as a value is taken as a bare string.

use toml::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub key: String,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Key(String),
    Index(usize),
}

pub fn parse_value(text: &str) -> Value {
    let doc = format!("v = {text}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(text.into())),
        Err(_) => Value::String(text.into()),
    }
}

impl std::str::FromStr for Override {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, value) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
        let key = key.trim();
        parse_path(key)?;
        Ok(Override { key: key.into(), value: parse_value(value.trim()) })
    }
}

fn parse_path(key: &str) -> Result<Vec<Segment>, String> {
    let bad = || format!("malformed key `{key}`");
    let mut out = Vec::new();
    for part in key.split('.') {
        let (name, mut rest) = match part.find('[') {
            Some(i) => (&part[..i], &part[i..]),
            None => (part, ""),
        };
        if name.is_empty() && rest.is_empty() {
            return Err(bad());
        }
        if !name.is_empty() {
            out.push(match name.parse::<usize>() {
                Ok(i) => Segment::Index(i),
                Err(_) => Segment::Key(name.into()),
            });
        }
        while !rest.is_empty() {
            let close = rest.find(']').ok_or_else(bad)?;
            let index = rest[1..close].trim().parse::<usize>().map_err(|_| bad())?;
            out.push(Segment::Index(index));
            rest = &rest[close + 1..];
            if !rest.is_empty() && !rest.starts_with('[') {
                return Err(bad());
            }
        }
    }
    Ok(out)
}

/// Sets `key` inside `doc`. Missing table entries are created so that the
/// scenario schema can reject unknown names with its own message.
pub fn apply(doc: &mut Value, ov: &Override) -> Result<(), String> {
    let path = parse_path(&ov.key)?;
    let mut node = doc;
    for seg in &path {
        node = match (seg, node) {
            (Segment::Key(k), Value::Table(t)) => t.entry(k.clone()).or_insert_with(|| Value::Table(Default::default())),
            (Segment::Index(i), Value::Array(a)) => {
                let len = a.len();
                a.get_mut(*i).ok_or_else(|| format!("`{}`: index {i} out of range (length {len})", ov.key))?
            }
            (Segment::Index(i), Value::Table(t)) => {
                t.entry(i.to_string()).or_insert_with(|| Value::Table(Default::default()))
            }
            (Segment::Key(k), _) => return Err(format!("`{}`: `{k}` is not inside a table", ov.key)),
            (Segment::Index(i), _) => return Err(format!("`{}`: [{i}] applied to a scalar", ov.key)),
        };
    }
    *node = ov.value.clone();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Value {
        parse_value("{ params = { m_p = 0.066, offset = [-0.12, 0.0, -0.05] }, name = \"x\" }")
    }

    #[test]
    fn values_use_file_syntax() {
        assert_eq!(parse_value("1.5"), Value::Float(1.5));
        assert_eq!(parse_value("-3"), Value::Integer(-3));
        assert_eq!(parse_value("[1, 2]"), Value::Array(vec![Value::Integer(1), Value::Integer(2)]));
        assert_eq!(parse_value("model"), Value::String("model".into()));
        assert_eq!(parse_value("\"a b\""), Value::String("a b".into()));
    }

    #[test]
    fn dotted_and_indexed_keys() {
        let mut d = doc();
        apply(&mut d, &"params.m_p=0".parse().unwrap()).unwrap();
        apply(&mut d, &"params.offset[0]=-0.18".parse().unwrap()).unwrap();
        apply(&mut d, &"params.offset.2 = -0.1".parse().unwrap()).unwrap();
        let p = &d["params"];
        assert_eq!(p["m_p"], Value::Integer(0));
        assert_eq!(p["offset"][0], Value::Float(-0.18));
        assert_eq!(p["offset"][2], Value::Float(-0.1));
    }

    #[test]
    fn new_keys_are_created() {
        let mut d = doc();
        apply(&mut d, &"gains.k_eta=[1, 2, 3]".parse().unwrap()).unwrap();
        assert!(d["gains"]["k_eta"].is_array());
    }

    #[test]
    fn rejects_malformed_overrides() {
        assert!("params.m_p".parse::<Override>().is_err());
        assert!("params..m_p=1".parse::<Override>().is_err());
        assert!("offset[x]=1".parse::<Override>().is_err());
        let mut d = doc();
        assert!(apply(&mut d, &"params.offset[3]=1".parse().unwrap()).is_err());
        assert!(apply(&mut d, &"name.first=1".parse().unwrap()).is_err());
    }
}
