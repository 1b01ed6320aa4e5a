//! Helpers for the `name:key=value,...` strings used to name problems and
//! schedules on the command line.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Splits `a=1,b=2` into a map. Empty input gives an empty map.
pub(crate) fn parse_kv<'a>(
    what: &'static str,
    input: &str,
    args: &'a str,
) -> Result<BTreeMap<&'a str, &'a str>> {
    let mut out = BTreeMap::new();
    for part in args.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse {
            what,
            input: input.to_string(),
            reason: format!("expected key=value, got `{part}`"),
        })?;
        if out.insert(k.trim(), v.trim()).is_some() {
            return Err(Error::Parse {
                what,
                input: input.to_string(),
                reason: format!("duplicate key `{}`", k.trim()),
            });
        }
    }
    Ok(out)
}

pub(crate) fn parse_num<T: FromStr>(what: &'static str, input: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| Error::Parse {
        what,
        input: input.to_string(),
        reason: format!("`{raw}`: {e}"),
    })
}
