use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::parse_key_values;
use crate::dataset::{GroupedDataset, RegressionData};
use crate::error::{Error, Result};

/// Design column name given to the prepended column of ones.
pub const INTERCEPT_NAME: &str = "(Intercept)";

/// Which CSV columns form the response, the design and the grouping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub response: String,
    pub predictors: Vec<String>,
    pub group: Option<String>,
    pub intercept: bool,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.predictors.iter().any(|p| p == &self.response) {
            return Err(Error::invalid("schema", format!("response `{}` is also a predictor", self.response)));
        }
        if let Some(g) = &self.group {
            if g == &self.response || self.predictors.contains(g) {
                return Err(Error::invalid("schema", format!("group column `{g}` is also used as data")));
            }
        }
        if self.predictors.is_empty() && !self.intercept {
            return Err(Error::invalid("schema", "design would have no columns"));
        }
        Ok(())
    }

    /// `response=`, `predictors=` (comma separated), optional `group=` and
    /// `intercept=true|false` (default true).
    pub fn parse(text: &str) -> Result<Self> {
        let mut response = None;
        let mut predictors = Vec::new();
        let mut group = None;
        let mut intercept = true;
        for (k, v) in parse_key_values(text)? {
            match k.as_str() {
                "response" => response = Some(v),
                "predictors" => predictors = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
                "group" => group = if v.is_empty() { None } else { Some(v) },
                "intercept" => {
                    intercept = v
                        .parse()
                        .map_err(|_| Error::Format(format!("intercept must be true or false, got {v:?}")))?
                }
                other => return Err(Error::Format(format!("unknown schema key {other:?}"))),
            }
        }
        let schema = Self {
            response: response.ok_or_else(|| Error::Format("schema needs a response".into()))?,
            predictors,
            group,
            intercept,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("response={}\npredictors={}\n", self.response, self.predictors.join(","));
        if let Some(g) = &self.group {
            s.push_str(&format!("group={g}\n"));
        }
        s.push_str(&format!("intercept={}\n", self.intercept));
        s
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &DatasetSchema) -> Result<GroupedDataset> {
    let f = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.as_ref().display())))?;
    read_csv(f, schema)
}

/// Groups are ordered by first appearance of their label.
pub fn read_csv<R: Read>(reader: R, schema: &DatasetSchema) -> Result<GroupedDataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let resp = col(&schema.response)?;
    let preds = schema.predictors.iter().map(|p| col(p)).collect::<Result<Vec<_>>>()?;
    let grp = schema.group.as_deref().map(col).transpose()?;

    let mut order: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<(Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = r + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| Error::Cell {
                row,
                column: headers[c].to_string(),
                message: format!("cannot parse {raw:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: headers[c].to_string(),
                    message: format!("non-finite value {raw:?}"),
                });
            }
            Ok(v)
        };
        let label = match grp {
            Some(g) => rec.get(g).unwrap_or("").to_string(),
            None => "all".to_string(),
        };
        let j = *index.entry(label.clone()).or_insert_with(|| {
            order.push(label);
            rows.push((Vec::new(), Vec::new()));
            rows.len() - 1
        });
        let y = cell(resp)?;
        let mut x = Vec::with_capacity(preds.len() + 1);
        if schema.intercept {
            x.push(1.0);
        }
        for &c in &preds {
            x.push(cell(c)?);
        }
        rows[j].0.push(y);
        rows[j].1.push(x);
    }
    if rows.is_empty() {
        return Err(Error::Data("CSV has no data rows".into()));
    }
    let p = preds.len() + usize::from(schema.intercept);
    let groups = rows
        .into_iter()
        .map(|(y, x)| RegressionData::new(DVector::from_vec(y), DMatrix::from_fn(x.len(), p, |i, c| x[i][c])))
        .collect::<Result<Vec<_>>>()?;
    let mut names = Vec::with_capacity(p);
    if schema.intercept {
        names.push(INTERCEPT_NAME.to_string());
    }
    names.extend(schema.predictors.iter().cloned());
    GroupedDataset::new(groups, order, schema.response.clone(), names)
}

/// Write `group` (when the dataset has more than one group or `with_group`),
/// the response and every non-intercept design column. Floats use the
/// shortest representation that parses back exactly.
pub fn write_csv<W: Write>(writer: W, data: &GroupedDataset, with_group: bool) -> Result<DatasetSchema> {
    let mut w = csv::Writer::from_writer(writer);
    let names = data.predictor_names();
    let keep: Vec<usize> = (0..names.len()).filter(|&c| names[c] != INTERCEPT_NAME).collect();
    let intercept = keep.len() < names.len();
    let group = with_group || data.m() > 1;
    let mut header = Vec::new();
    if group {
        header.push("group".to_string());
    }
    header.push(data.response_name().to_string());
    header.extend(keep.iter().map(|&c| names[c].clone()));
    w.write_record(&header)?;
    for (g, label) in data.groups().iter().zip(data.labels()) {
        for i in 0..g.n() {
            let mut rec = Vec::with_capacity(header.len());
            if group {
                rec.push(label.clone());
            }
            rec.push(format!("{:?}", g.y()[i]));
            rec.extend(keep.iter().map(|&c| format!("{:?}", g.x()[(i, c)])));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(DatasetSchema {
        response: data.response_name().to_string(),
        predictors: keep.iter().map(|&c| names[c].clone()).collect(),
        group: group.then(|| "group".to_string()),
        intercept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOY: &str = "g,y,x\nb,1.0,0.5\na,2.0,1.5\nb,3.0,2.5\na,4.5,-1\n";

    fn schema() -> DatasetSchema {
        DatasetSchema {
            response: "y".into(),
            predictors: vec!["x".into()],
            group: Some("g".into()),
            intercept: true,
        }
    }

    #[test]
    fn groups_in_first_appearance_order() {
        let d = read_csv(TOY.as_bytes(), &schema()).unwrap();
        assert_eq!(d.labels(), &["b".to_string(), "a".to_string()]);
        assert_eq!(d.group(0).y().as_slice(), &[1.0, 3.0]);
        assert_eq!(d.group(1).x()[(1, 1)], -1.0);
        assert_eq!(d.group(1).x()[(1, 0)], 1.0);
        assert_eq!(d.predictor_names()[0], INTERCEPT_NAME);
    }

    #[test]
    fn bad_cell_is_named() {
        let bad = "g,y,x\na,1,2\na,oops,3\n";
        match read_csv(bad.as_bytes(), &schema()) {
            Err(Error::Cell { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected a cell error, got {other:?}"),
        }
        assert!(matches!(read_csv("g,y,x\na,NaN,1\n".as_bytes(), &schema()), Err(Error::Cell { .. })));
        let mut s = schema();
        s.predictors = vec!["z".into()];
        assert!(matches!(read_csv(TOY.as_bytes(), &s), Err(Error::Data(_))));
    }

    #[test]
    fn write_then_read_is_exact() {
        let d = read_csv(TOY.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        let s = write_csv(&mut buf, &d, true).unwrap();
        let back = read_csv(buf.as_slice(), &s).unwrap();
        assert_eq!(back.groups(), d.groups());
        assert_eq!(back.labels(), d.labels());
    }

    #[test]
    fn schema_text_round_trip() {
        let s = schema();
        assert_eq!(DatasetSchema::parse(&s.to_text()).unwrap(), s);
        assert!(DatasetSchema::parse("response=y\npredictors=y\n").is_err());
    }
}
