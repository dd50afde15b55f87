//! Plain-text number formatting shared by every CSV writer.

/// Shortest decimal text that parses back to exactly `v`.
///
/// Positional notation is used for magnitudes in [1e-4, 1e15), scientific
/// otherwise, so large grids stay readable without losing precision.
pub fn format_float(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 {
        "0".to_string()
    } else if (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub(crate) fn parse_float(field: &str, line: usize, column: usize) -> crate::Result<f64> {
    field.trim().parse::<f64>().map_err(|_| crate::Error::Parse {
        line,
        column,
        message: format!("not a number: {field:?}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(-0.0), "0");
        assert_eq!(format_float(35.0), "35");
        assert_eq!(format_float(0.25), "0.25");
        assert_eq!(format_float(1.5e-7), "1.5e-7");
    }

    proptest! {
        #[test]
        fn roundtrips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            let s = format_float(v);
            let back: f64 = s.parse().unwrap();
            prop_assert!(back == v || (v == 0.0 && back == 0.0));
        }
    }
}
