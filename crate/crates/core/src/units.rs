//! Strict parsing of quantities written as `"<number> <unit>"`.

use crate::error::{Error, Result};

fn split(text: &str) -> Result<(f64, &str)> {
    let text = text.trim();
    let is_unit = |ch: char| ch.is_alphabetic() || ch == 'µ';
    let pos = text
        .char_indices()
        .rev()
        .take_while(|&(_, ch)| is_unit(ch))
        .last()
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Config(format!("'{text}' has no unit suffix")))?;
    let (num, unit) = text.split_at(pos);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("'{text}' does not start with a number")))?;
    if !value.is_finite() {
        return Err(Error::Config(format!("'{text}' is not finite")));
    }
    Ok((value, unit.trim()))
}

/// Frequency in MHz from e.g. `"15.9 MHz"`, `"9 GHz"`, `"150 Hz"`.
pub fn parse_frequency(text: &str) -> Result<f64> {
    let (value, unit) = split(text)?;
    let scale = match unit {
        "Hz" => 1e-6,
        "kHz" => 1e-3,
        "MHz" => 1.0,
        "GHz" => 1e3,
        other => {
            return Err(Error::Config(format!(
                "unknown frequency unit '{other}' (use Hz, kHz, MHz or GHz)"
            )))
        }
    };
    Ok(value * scale)
}

/// Temperature in mK from e.g. `"25 mK"`, `"0.01 K"`.
pub fn parse_temperature(text: &str) -> Result<f64> {
    let (value, unit) = split(text)?;
    let scale = match unit {
        "K" => 1e3,
        "mK" => 1.0,
        "uK" | "µK" => 1e-3,
        other => {
            return Err(Error::Config(format!(
                "unknown temperature unit '{other}' (use K, mK or uK)"
            )))
        }
    };
    Ok(value * scale)
}

/// Time in µs from e.g. `"1 us"`, `"250 ns"`.
pub fn parse_time(text: &str) -> Result<f64> {
    let (value, unit) = split(text)?;
    let scale = match unit {
        "s" => 1e6,
        "ms" => 1e3,
        "us" | "µs" => 1.0,
        "ns" => 1e-3,
        other => {
            return Err(Error::Config(format!(
                "unknown time unit '{other}' (use s, ms, us or ns)"
            )))
        }
    };
    Ok(value * scale)
}

macro_rules! serde_unit {
    ($name:ident, $parse:ident, $suffix:expr) => {
        pub mod $name {
            use serde::{de, Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(value: &f64, ser: S) -> Result<S::Ok, S::Error> {
                ser.serialize_str(&format!("{} {}", value, $suffix))
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
                let text = String::deserialize(de)?;
                super::$parse(&text).map_err(|e| de::Error::custom(e.message()))
            }
        }
    };
}

serde_unit!(mhz, parse_frequency, "MHz");
serde_unit!(millikelvin, parse_temperature, "mK");
serde_unit!(micros, parse_time, "us");

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies() {
        assert_eq!(parse_frequency("15.9 MHz").unwrap(), 15.9);
        assert_eq!(parse_frequency("9 GHz").unwrap(), 9000.0);
        assert!((parse_frequency("12 kHz").unwrap() - 0.012).abs() < 1e-15);
        assert!((parse_frequency("150Hz").unwrap() - 150e-6).abs() < 1e-18);
        assert!((parse_frequency("-1.5e3 MHz").unwrap() + 1500.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bare_and_unknown() {
        assert!(parse_frequency("15.9").is_err());
        assert!(parse_frequency("15.9 mhz").is_err());
        assert!(parse_frequency("MHz").is_err());
        assert!(parse_frequency("inf MHz").is_err());
        assert!(parse_temperature("25 C").is_err());
        assert!(parse_time("3 min").is_err());
    }

    #[test]
    fn temperatures_and_times() {
        assert_eq!(parse_temperature("25 mK").unwrap(), 25.0);
        assert_eq!(parse_temperature("0.01 K").unwrap(), 10.0);
        assert_eq!(parse_time("250 ns").unwrap(), 0.25);
        assert_eq!(parse_time("1 µs").unwrap(), 1.0);
    }
}
