//! Dataset CSV and model JSON serialization.
//!
//! CSV layout: header row, then `date, t, p_1..p_M, g_1..g_D', q_1..q_M`.
//! `date` and `t` may be absent or empty; columns are located by name.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DemandError, DemandModel, Sample};

fn indexed_columns(headers: &csv::StringRecord, prefix: &str) -> Vec<(usize, usize)> {
    let mut cols: Vec<(usize, usize)> = headers
        .iter()
        .enumerate()
        .filter_map(|(pos, h)| {
            h.trim()
                .strip_prefix(prefix)
                .and_then(|rest| rest.parse::<usize>().ok())
                .map(|k| (k, pos))
        })
        .collect();
    cols.sort_unstable();
    cols
}

fn require_sequence(cols: &[(usize, usize)], prefix: &str, count: usize) -> Result<Vec<usize>, DemandError> {
    (1..=count)
        .map(|k| {
            cols.iter()
                .find(|(idx, _)| *idx == k)
                .map(|(_, pos)| *pos)
                .ok_or_else(|| DemandError::MissingColumn(format!("{prefix}{k}")))
        })
        .collect()
}

/// Parses a dataset from CSV text.
pub fn read_dataset_csv<R: Read>(reader: R) -> Result<Dataset, DemandError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| DemandError::Parse(e.to_string()))?
        .clone();
    let p_cols = indexed_columns(&headers, "p_");
    let q_cols = indexed_columns(&headers, "q_");
    let g_cols = indexed_columns(&headers, "g_");
    let m = p_cols.len().max(q_cols.len());
    if m == 0 {
        return Err(DemandError::MissingColumn("p_1".into()));
    }
    let p_pos = require_sequence(&p_cols, "p_", m)?;
    let q_pos = require_sequence(&q_cols, "q_", m)?;
    let g_pos = require_sequence(&g_cols, "g_", g_cols.len())?;
    let date_pos = headers.iter().position(|h| h == "date");
    let t_pos = headers.iter().position(|h| h == "t");

    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| DemandError::Parse(e.to_string()))?;
        let num = |pos: usize, name: &str| -> Result<f64, DemandError> {
            let raw = rec.get(pos).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|_| DemandError::Parse(format!("row {}: column {name}: `{raw}` is not a number", row + 1)))
        };
        let prices = p_pos
            .iter()
            .enumerate()
            .map(|(k, &pos)| num(pos, &format!("p_{}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let externals = g_pos
            .iter()
            .enumerate()
            .map(|(k, &pos)| num(pos, &format!("g_{}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let quantities = q_pos
            .iter()
            .enumerate()
            .map(|(k, &pos)| num(pos, &format!("q_{}", k + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        let t = match t_pos.and_then(|p| rec.get(p)).filter(|s| !s.is_empty()) {
            Some(raw) => Some(
                raw.parse::<usize>()
                    .map_err(|_| DemandError::Parse(format!("row {}: column t: `{raw}` is not a time step", row + 1)))?,
            ),
            None => None,
        };
        let date = date_pos
            .and_then(|p| rec.get(p))
            .filter(|s| !s.is_empty())
            .map(str::to_owned);
        samples.push(Sample {
            date,
            t,
            prices,
            externals,
            quantities,
        });
    }
    Dataset::new(samples)
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DemandError> {
    read_dataset_csv(File::open(path)?)
}

/// Writes a dataset in the CSV layout understood by [`read_dataset_csv`].
pub fn write_dataset_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), DemandError> {
    let m = data.n_products();
    let e = data.external_dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string(), "t".to_string()];
    header.extend((1..=m).map(|k| format!("p_{k}")));
    header.extend((1..=e).map(|k| format!("g_{k}")));
    header.extend((1..=m).map(|k| format!("q_{k}")));
    let csv_err = |e: csv::Error| DemandError::Parse(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for s in data.samples() {
        let mut rec = vec![
            s.date.clone().unwrap_or_default(),
            s.t.map(|t| t.to_string()).unwrap_or_default(),
        ];
        rec.extend(s.prices.iter().chain(&s.externals).chain(&s.quantities).map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: &Path) -> Result<(), DemandError> {
    write_dataset_csv(data, File::create(path)?)
}

pub fn model_to_json(model: &DemandModel) -> String {
    serde_json::to_string_pretty(model).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<DemandModel, DemandError> {
    let model: DemandModel = serde_json::from_str(text).map_err(|e| DemandError::Parse(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<DemandModel, DemandError> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &DemandModel, path: &Path) -> Result<(), DemandError> {
    std::fs::write(path, model_to_json(model))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_layout() {
        let text = "date,t,p_1,p_2,g_1,q_1,q_2\n2024-01-01,1,1.0,0.9,3,10,20\n2024-01-02,,0.8,1.0,4,11,19\n";
        let data = read_dataset_csv(text.as_bytes()).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.n_products(), 2);
        assert_eq!(data.external_dim(), 1);
        assert_eq!(data.samples()[0].t, Some(1));
        assert_eq!(data.samples()[1].t, None);
        assert_eq!(data.samples()[1].prices, vec![0.8, 1.0]);
        assert_eq!(data.samples()[1].quantities, vec![11.0, 19.0]);
    }

    #[test]
    fn missing_quantity_column_is_named() {
        let text = "p_1,p_2,q_1\n1,1,3\n";
        let err = read_dataset_csv(text.as_bytes()).unwrap_err();
        match err {
            DemandError::MissingColumn(c) => assert_eq!(c, "q_2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let text = "date,t,p_1,q_1\n,2,0.85,3.25\n,1,1.0,2.0\n";
        let data = read_dataset_csv(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_dataset_csv(&data, &mut buf).unwrap();
        let again = read_dataset_csv(buf.as_slice()).unwrap();
        assert_eq!(data, again);
        assert_eq!(again.horizon(), 2);
    }

    #[test]
    fn bad_number_reports_column() {
        let text = "p_1,q_1\n1.0,abc\n";
        let err = read_dataset_csv(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("q_1"), "{err}");
    }
}
