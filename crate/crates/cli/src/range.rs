//! Parsing of value lists: `a,b,c`, `start:stop:xF` (geometric) or `start:stop:step`.

pub fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [single] => single
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number {v:?}: {e}")))
            .collect(),
        [start, stop, step] => {
            let start = number(start)?;
            let stop = number(stop)?;
            if let Some(factor) = step.strip_prefix('x') {
                geometric(start, stop, number(factor)?)
            } else {
                arithmetic(start, stop, number(step)?)
            }
        }
        _ => Err(format!("expected a list or start:stop:step, got {text:?}")),
    }
}

fn number(v: &str) -> Result<f64, String> {
    v.trim().parse::<f64>().map_err(|e| format!("bad number {v:?}: {e}"))
}

fn geometric(start: f64, stop: f64, factor: f64) -> Result<Vec<f64>, String> {
    if !(start > 0.0 && factor > 1.0 && stop >= start) {
        return Err("geometric range needs 0 < start <= stop and factor > 1".into());
    }
    let count = ((stop / start).ln() / factor.ln() + 1e-9).floor() as i32;
    Ok((0..=count).map(|k| start * factor.powi(k)).collect())
}

fn arithmetic(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, String> {
    if !(step > 0.0 && stop >= start) {
        return Err("arithmetic range needs start <= stop and step > 0".into());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_decades() {
        let v = parse_values("1e10:1e14:x10").unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v[0], 1e10);
        assert!((v[4] / 1e14 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lists_and_steps() {
        assert_eq!(parse_values("1, 2,5").unwrap(), vec![1.0, 2.0, 5.0]);
        assert_eq!(parse_values("0.5:2:0.5").unwrap(), vec![0.5, 1.0, 1.5, 2.0]);
        assert!(parse_values("1:2").is_err());
        assert!(parse_values("1:10:x1").is_err());
        assert!(parse_values("a").is_err());
    }
}
