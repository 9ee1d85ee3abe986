use mixsdr::simbench::{Scenario, ScenarioName};
use mixsdr::Response;
use mixsdr_cli::schema::{default_schema, fmt_num};
use mixsdr_cli::{read_dataset, write_dataset, DataSchema, ResponseType};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn schema(text: &str) -> DataSchema {
    toml::from_str(text).unwrap()
}

const SMALL: &str =
    "response = \"y\"\nresponse_type = \"categorical\"\ncontinuous = [\"x1\"]\nbinary = [\"h1\"]\n";

#[test]
fn three_rows() {
    let data = read_dataset(
        "y,x1,h1\na,1.5,0\nb,2.0,1\na,-1,1\n".as_bytes(),
        &schema(SMALL),
    )
    .unwrap();
    assert_eq!((data.n(), data.p(), data.q()), (3, 1, 1));
    assert_eq!(data.x[(2, 0)], -1.0);
    assert_eq!(
        data.y,
        Response::Categorical {
            codes: vec![0, 1, 0],
            levels: vec!["a".into(), "b".into()]
        }
    );
}

#[test]
fn non_binary_value_names_the_row() {
    let err = read_dataset("y,x1,h1\na,1.5,0\nb,2.0,2\n".as_bytes(), &schema(SMALL)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row 2") && msg.contains("h1"), "{msg}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_values_are_rejected() {
    for text in ["y,x1,h1\na,,0\n", "y,x1,h1\na,NA,0\n", "y,x1,h1\n,1,0\n"] {
        let msg = read_dataset(text.as_bytes(), &schema(SMALL))
            .unwrap_err()
            .to_string();
        assert!(msg.contains("missing value at row 1"), "{msg}");
    }
}

#[test]
fn schema_checks() {
    let both = schema("response = \"y\"\nresponse_type = \"continuous\"\ncontinuous = [\"a\"]\nbinary = [\"a\"]\n");
    assert!(both.validate().is_err());
    let absent = read_dataset(
        "y,x1,h1\n1,2,0\n".as_bytes(),
        &schema(&SMALL.replace("\"x1\"", "\"x9\"")),
    );
    assert!(absent.unwrap_err().to_string().contains("x9"));
}

#[test]
fn headerless_columns_by_position() {
    let s = schema("response = \"3\"\nresponse_type = \"continuous\"\ncontinuous = [\"1\"]\nbinary = [\"2\"]\ndelimiter = \";\"\nheader = false\n");
    let data = read_dataset("0.5;1;7\n-2;0;8\n".as_bytes(), &s).unwrap();
    assert_eq!(data.y, Response::Continuous(vec![7.0, 8.0]));
    assert_eq!(data.h[(0, 0)], 1.0);
}

#[test]
fn write_then_read_is_identity() {
    for (name, rtype) in [
        (ScenarioName::MixedD1, ResponseType::Categorical),
        (ScenarioName::ContD2, ResponseType::Categorical),
    ] {
        let s = Scenario::new(name);
        let data = s.generate(60, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let schema = default_schema(data.p(), data.q(), rtype);
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data, &schema).unwrap();
        let back = read_dataset(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, data);
    }
    let data = mixsdr::Dataset::new(
        Response::Continuous(vec![0.1, -3.25e-12, 7e300]),
        nalgebra::DMatrix::from_column_slice(3, 1, &[1.0 / 3.0, f64::MIN_POSITIVE, -0.0]),
        nalgebra::DMatrix::zeros(3, 0),
    )
    .unwrap();
    let schema = DataSchema {
        binary: vec![],
        ..default_schema(1, 0, ResponseType::Continuous)
    };
    let mut buf = Vec::new();
    write_dataset(&mut buf, &data, &schema).unwrap();
    assert_eq!(read_dataset(buf.as_slice(), &schema).unwrap(), data);
}

proptest! {
    #[test]
    fn number_text_round_trips(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
        prop_assert_eq!(fmt_num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
