//! CSV datasets and JSON schemas on disk.
//!
//! A dataset file has a header row. Covariate columns are matched to the
//! schema by name, in any order; the label column holds class labels as
//! declared in the schema. Unknown columns are ignored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::schema::{Dataset, Matrix, Schema};

pub fn read_schema(path: impl AsRef<Path>) -> Result<Schema> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

pub fn write_schema(schema: &Schema, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, schema)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Whether the label column must be present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    Required,
    Optional,
    Ignored,
}

pub fn read_dataset<T: Scalar>(path: impl AsRef<Path>, schema: &Schema, labels: Labels) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_dataset(BufReader::new(f), schema, labels).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_dataset<T: Scalar>(input: impl Read, schema: &Schema, labels: Labels) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name);

    let mut positions = Vec::with_capacity(schema.dim());
    let mut missing = Vec::new();
    for c in schema.columns() {
        match find(&c.name) {
            Some(p) => positions.push(p),
            None => missing.push(c.name.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Schema(format!("missing covariate column(s): {}", missing.join(", "))));
    }
    let label_pos = match (labels, find(schema.label_column())) {
        (Labels::Ignored, _) => None,
        (Labels::Required, None) => {
            return Err(Error::Data(format!(
                "missing label column '{}'",
                schema.label_column()
            )))
        }
        (_, p) => p,
    };

    let mut rows = Matrix::new(schema.dim());
    let mut ys = label_pos.map(|_| Vec::new());
    let mut row = vec![T::zero(); schema.dim()];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        for (c, &p) in positions.iter().enumerate() {
            let cell = record.get(p).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                Error::Data(format!(
                    "line {line}, column '{}': cannot parse {cell:?} as a number",
                    schema.columns()[c].name
                ))
            })?;
            row[c] = T::lit(v);
        }
        schema
            .check_row(&row)
            .map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        rows.push_row(&row)?;
        if let (Some(p), Some(ys)) = (label_pos, ys.as_mut()) {
            let cell = record.get(p).unwrap_or("");
            let class = schema
                .class_labels()
                .iter()
                .position(|l| l == cell)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "line {line}, column '{}': unknown class label {cell:?}",
                        schema.label_column()
                    ))
                })?;
            ys.push(class);
        }
    }
    Dataset::new(schema.clone(), rows, ys)
}

pub fn write_dataset<T: Scalar>(data: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    let f = File::create(path)?;
    format_dataset(data, BufWriter::new(f))
}

pub fn format_dataset<T: Scalar>(data: &Dataset<T>, output: impl Write) -> Result<()> {
    let schema = data.schema();
    let mut w = csv::Writer::from_writer(output);
    let mut header: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
    if data.labels().is_some() {
        header.push(schema.label_column());
    }
    w.write_record(&header)?;
    for (i, r) in data.rows().rows().enumerate() {
        let mut rec: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        if let Some(l) = data.labels() {
            rec.push(schema.class_labels()[l[i]].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;

    fn schema() -> Schema {
        Schema::new(
            vec![ColumnSpec::continuous("a"), ColumnSpec::ordinal("q", 3)],
            vec!["no".into(), "yes".into()],
        )
        .unwrap()
    }

    #[test]
    fn reads_by_name_and_round_trips() {
        let text = "q,extra,a,label\n2,x,0.25,yes\n0,y,-1.5,no\n";
        let d: Dataset<f64> = parse_dataset(text.as_bytes(), &schema(), Labels::Required).unwrap();
        assert_eq!(d.rows().to_rows(), vec![vec![0.25, 2.0], vec![-1.5, 0.0]]);
        assert_eq!(d.labels(), Some(&[1, 0][..]));
        let mut out = Vec::new();
        format_dataset(&d, &mut out).unwrap();
        let back: Dataset<f64> = parse_dataset(&out[..], &schema(), Labels::Required).unwrap();
        assert_eq!(back.rows(), d.rows());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn errors_name_the_problem() {
        let no_label = "a,q\n0.1,1\n";
        let err = parse_dataset::<f64>(no_label.as_bytes(), &schema(), Labels::Required).unwrap_err();
        assert!(err.to_string().contains("missing label column 'label'"), "{err}");
        assert!(parse_dataset::<f64>(no_label.as_bytes(), &schema(), Labels::Optional)
            .unwrap()
            .labels()
            .is_none());

        let no_q = "a,label\n0.1,no\n";
        let err = parse_dataset::<f64>(no_q.as_bytes(), &schema(), Labels::Required).unwrap_err();
        assert!(err.to_string().contains("q"), "{err}");

        let bad_num = "a,q,label\n0.1,1,no\nabc,1,no\n";
        let err = parse_dataset::<f64>(bad_num.as_bytes(), &schema(), Labels::Required).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let bad_level = "a,q,label\n0.1,7,no\n";
        assert!(parse_dataset::<f64>(bad_level.as_bytes(), &schema(), Labels::Required).is_err());

        let bad_class = "a,q,label\n0.1,1,maybe\n";
        let err = parse_dataset::<f64>(bad_class.as_bytes(), &schema(), Labels::Required).unwrap_err();
        assert!(err.to_string().contains("maybe"), "{err}");
    }
}
