use super::{CarbonPeak, HydrogenPeak, NmrSpectrum, SpectraError};

fn syntax(clause: usize, message: impl Into<String>) -> SpectraError {
    SpectraError::Syntax { clause, message: message.into() }
}

/// Splits at commas that are not inside parentheses.
fn top_level_clauses(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

/// One clause as (shift, inner parts), e.g. `2.50 (4H, q, J = 7.3 Hz)`.
fn split_clause(clause: &str, idx: usize) -> Result<(f64, Vec<String>), SpectraError> {
    let clause = clause.trim();
    let open = clause.find('(').ok_or_else(|| syntax(idx, format!("missing '(' in '{clause}'")))?;
    if !clause.ends_with(')') {
        return Err(syntax(idx, format!("missing ')' in '{clause}'")));
    }
    let shift = parse_shift(clause[..open].trim(), idx)?;
    let inner = &clause[open + 1..clause.len() - 1];
    let parts: Vec<String> = inner.split(',').map(|p| p.trim().to_string()).collect();
    Ok((shift, parts))
}

/// A shift or a range `a-b` / `a–b`, which maps to its midpoint.
fn parse_shift(text: &str, idx: usize) -> Result<f64, SpectraError> {
    let bad = || syntax(idx, format!("bad chemical shift '{text}'"));
    if text.is_empty() {
        return Err(bad());
    }
    if let Ok(v) = text.parse::<f64>() {
        return v.is_finite().then_some(v).ok_or_else(bad);
    }
    let normalized = text.replace('–', "-");
    let body = normalized.strip_prefix('-').unwrap_or(&normalized);
    let (a, b) = body.split_once('-').ok_or_else(bad)?;
    let sign = if normalized.starts_with('-') { -1.0 } else { 1.0 };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    Ok((sign * a + b) / 2.0)
}

fn parse_count(text: &str, nucleus: char, idx: usize) -> Result<u32, SpectraError> {
    let body = text
        .strip_suffix(nucleus)
        .ok_or_else(|| syntax(idx, format!("expected atom count like '2{nucleus}', got '{text}'")))?;
    let n: u32 = body.trim().parse().map_err(|_| syntax(idx, format!("bad atom count '{text}'")))?;
    if n == 0 {
        return Err(syntax(idx, "atom count must be at least 1"));
    }
    Ok(n)
}

fn clauses(text: &str) -> Result<Vec<&str>, SpectraError> {
    if text.trim().is_empty() {
        return Err(syntax(0, "empty peak list"));
    }
    Ok(top_level_clauses(text))
}

pub fn parse_cnmr(text: &str) -> Result<Vec<CarbonPeak>, SpectraError> {
    clauses(text)?
        .iter()
        .enumerate()
        .map(|(idx, clause)| {
            let (shift, parts) = split_clause(clause, idx)?;
            let count = parse_count(&parts[0], 'C', idx)?;
            let pattern = parts.get(1).filter(|p| !p.is_empty()).cloned().unwrap_or_else(|| "s".into());
            Ok(CarbonPeak { shift, count, pattern })
        })
        .collect()
}

pub fn parse_hnmr(text: &str) -> Result<Vec<HydrogenPeak>, SpectraError> {
    clauses(text)?
        .iter()
        .enumerate()
        .map(|(idx, clause)| {
            let (shift, parts) = split_clause(clause, idx)?;
            let count = parse_count(&parts[0], 'H', idx)?;
            let pattern = parts
                .get(1)
                .filter(|p| !p.is_empty())
                .cloned()
                .ok_or_else(|| syntax(idx, "missing splitting pattern"))?;
            let coupling = match parts.iter().skip(2).find(|p| p.starts_with('J')) {
                Some(j) => Some(parse_coupling(j, idx)?),
                None => None,
            };
            Ok(HydrogenPeak { shift, count, pattern, coupling })
        })
        .collect()
}

/// `J = 7.3 Hz` (also `J=7.3`); only the first value is kept.
fn parse_coupling(text: &str, idx: usize) -> Result<f64, SpectraError> {
    let value = text.split_once('=').map(|(_, v)| v).ok_or_else(|| syntax(idx, format!("bad coupling '{text}'")))?;
    let number: String = value.trim().chars().take_while(|c| c.is_ascii_digit() || *c == '.').collect();
    number.parse::<f64>().map_err(|_| syntax(idx, format!("bad coupling value '{text}'")))
}

/// Both channels; an empty H-NMR text means no protons.
pub fn parse_spectrum(cnmr: &str, hnmr: &str) -> Result<NmrSpectrum, SpectraError> {
    let carbon = parse_cnmr(cnmr)?;
    let hydrogen = if hnmr.trim().is_empty() { Vec::new() } else { parse_hnmr(hnmr)? };
    Ok(NmrSpectrum { carbon, hydrogen })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn carbon_clauses() {
        let peaks = parse_cnmr("9.1 (2C, s), 27.8 (2C, s), 170.5 (2C, s)").unwrap();
        assert_eq!(peaks.iter().map(|p| p.count).collect::<Vec<_>>(), vec![2, 2, 2]);
        assert_eq!(peaks[2].shift, 170.5);
        let peaks = parse_cnmr("49.0 (1C, s)").unwrap();
        assert_eq!((peaks[0].shift, peaks[0].count), (49.0, 1));
    }

    #[test]
    fn hydrogen_clauses() {
        let peaks = parse_hnmr("1.06 (6H, t,  J  = 7.3 Hz), 2.50 (4H, q,  J  = 7.3 Hz)").unwrap();
        assert_eq!(peaks.len(), 2);
        assert_eq!(
            (peaks[0].shift, peaks[0].count, peaks[0].pattern.as_str(), peaks[0].coupling),
            (1.06, 6, "t", Some(7.3))
        );
        assert_eq!(
            (peaks[1].shift, peaks[1].count, peaks[1].pattern.as_str(), peaks[1].coupling),
            (2.50, 4, "q", Some(7.3))
        );
        let peaks = parse_hnmr("5.44 (1H, d, J = 1.9 Hz)").unwrap();
        assert_eq!(peaks[0].coupling, Some(1.9));
        assert_eq!(parse_hnmr("2.50 (3H, s)").unwrap()[0].coupling, None);
    }

    #[test]
    fn multiple_couplings_keep_first() {
        let peaks = parse_hnmr("7.10 (1H, dd, J = 8.0, 2.1 Hz)").unwrap();
        assert_eq!(peaks[0].coupling, Some(8.0));
        let peaks = parse_hnmr("7.10 (1H, dd, J = 8.0 Hz, J = 2.1 Hz)").unwrap();
        assert_eq!(peaks[0].coupling, Some(8.0));
    }

    #[test]
    fn ranges_and_negative_shifts() {
        let peaks = parse_hnmr("7.20-7.40 (5H, m)").unwrap();
        assert!((peaks[0].shift - 7.30).abs() < 1e-12);
        assert_eq!(parse_cnmr("-2.3 (1C, s)").unwrap()[0].shift, -2.3);
    }

    #[test]
    fn errors_name_the_clause() {
        assert!(matches!(parse_cnmr(""), Err(SpectraError::Syntax { clause: 0, .. })));
        assert!(matches!(parse_cnmr("9.1 (2C, s), 27.8 2C"), Err(SpectraError::Syntax { clause: 1, .. })));
        assert!(matches!(parse_hnmr("1.0 (2C, s)"), Err(SpectraError::Syntax { clause: 0, .. })));
        assert!(matches!(parse_hnmr("x (2H, s)"), Err(SpectraError::Syntax { .. })));
        assert!(matches!(parse_hnmr("1.0 (0H, s)"), Err(SpectraError::Syntax { .. })));
    }
}
