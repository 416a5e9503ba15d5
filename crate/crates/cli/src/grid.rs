use std::fmt;
use std::str::FromStr;

/// Refuse grids that would not fit in memory anyway.
const MAX_POINTS: usize = 10_000_000;

/// A list of values given as a scalar, a comma list, or `start:stop:step`.
/// Ranges include `stop` when it is hit within 1e-12 (relative to its scale).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec(pub Vec<f64>);

fn number(s: &str) -> Result<f64, String> {
    let x: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("'{s}' is not a number"))?;
    if !x.is_finite() {
        return Err(format!("'{s}' is not finite"));
    }
    Ok(x)
}

pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [single] => single.split(',').map(number).collect(),
        [start, stop, step] => {
            let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
            if step == 0.0 || (stop - start) * step < 0.0 {
                return Err(format!("step {step} does not lead from {start} to {stop}"));
            }
            let tol = 1e-12 * start.abs().max(stop.abs()).max(1.0);
            let span = ((stop - start) / step).abs();
            if span > MAX_POINTS as f64 {
                return Err(format!("grid '{s}' has more than {MAX_POINTS} points"));
            }
            let mut values = Vec::new();
            for k in 0.. {
                let x = start + k as f64 * step;
                let past = if step > 0.0 {
                    x > stop + tol
                } else {
                    x < stop - tol
                };
                if past {
                    break;
                }
                values.push(if (x - stop).abs() <= tol { stop } else { x });
            }
            Ok(values)
        }
        _ => Err(format!(
            "'{s}' is not a value, a comma list or start:stop:step"
        )),
    }
}

impl FromStr for GridSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_grid(s).map(GridSpec)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|x| x.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_and_list() {
        assert_eq!(parse_grid("0.9").unwrap(), vec![0.9]);
        assert_eq!(parse_grid("1, 2,3").unwrap(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn range_includes_stop() {
        let g = parse_grid("0.5:0.99:0.01").unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 0.5);
        assert_eq!(*g.last().unwrap(), 0.99);
        assert_eq!(parse_grid("0:40:0.5").unwrap().len(), 81);
        assert_eq!(parse_grid("10:1000:10").unwrap().len(), 100);
    }

    #[test]
    fn range_stops_short_of_unreached_stop() {
        assert_eq!(
            parse_grid("0:1:0.3").unwrap(),
            vec![0.0, 0.3, 0.6, 0.8999999999999999]
        );
    }

    #[test]
    fn descending_range() {
        assert_eq!(parse_grid("3:1:-1").unwrap(), vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn malformed() {
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1:2:0").is_err());
        assert!(parse_grid("2:1:0.5").is_err());
        assert!(parse_grid("a").is_err());
        assert!(parse_grid("0:1e9:1e-3").is_err());
    }
}
