import csv
import os
import shutil
from datetime import date, datetime

import pytest

from hosprisk import ingest
from hosprisk.ingest import (
    SCHEMAS,
    DanglingReference,
    EmptyFile,
    FieldTypeError,
    MissingColumn,
    MissingTable,
    load_dataset,
    parse_table,
)

PATIENT_HEADER = "Id,BIRTHDATE,DEATHDATE,GENDER,HEALTHCARE_EXPENSES,HEALTHCARE_COVERAGE\n"
MED_HEADER = "START,STOP,PATIENT,ENCOUNTER,CODE,BASE_COST,PAYER_COVERAGE,DISPENSES,TOTALCOST\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def minimal_dir(root):
    """Hand-written two-patient dataset touching every table."""
    files = {
        "patients": PATIENT_HEADER + "p1,1960-05-01,,F,1000.50,200\np2,1970-01-01,2020-01-01,M,0,0\n",
        "encounters": "Id,START,STOP,PATIENT,PROVIDER,PAYER,ENCOUNTERCLASS,CODE,TOTAL_CLAIM_COST,PAYER_COVERAGE\n"
        "e1,2001-03-01T09:00:00Z,2001-03-01T10:00:00Z,p1,dr1,pay1,Wellness,1,100,50\n"
        "e2,2004-07-09,,p2,,,inpatient,2,900.25,0\n",
        "conditions": "START,STOP,PATIENT,ENCOUNTER,CODE,DESCRIPTION\n2001-03-01,2001-03-11,p1,e1,c1,\"Flu, acute\"\n",
        "medications": MED_HEADER + "2001-03-01T09:00:00Z,,p1,e1,m1,5,1,3,15\n",
        "procedures": "START,STOP,PATIENT,ENCOUNTER,CODE,DESCRIPTION,BASE_COST\n2001-03-01T09:00:00Z,,p1,e1,pr1,x,10\n",
        "immunizations": "DATE,PATIENT,ENCOUNTER,CODE,DESCRIPTION,BASE_COST\n2001-03-01T09:00:00Z,p1,e1,i1,flu,140.52\n",
        "observations": "DATE,PATIENT,ENCOUNTER,CODE,DESCRIPTION,VALUE,UNITS,TYPE\n2001-03-01T09:00:00Z,p1,e1,o1,h,170,cm,numeric\n",
        "imaging_studies": "Id,DATE,PATIENT,ENCOUNTER,BODYSITE_CODE,MODALITY_CODE,SOP_CODE\n",
        "allergies": "START,STOP,PATIENT,ENCOUNTER,CODE,DESCRIPTION\n",
        "payers": "Id,NAME,AMOUNT_COVERED,AMOUNT_UNCOVERED,REVENUE\npay1,Acme,1,2,3\n",
        "providers": "Id,ORGANIZATION,NAME,GENDER,SPECIALITY,UTILIZATION\ndr1,org,Dr A,F,GP,10\n",
    }
    for table, text in files.items():
        write(root / SCHEMAS[table].default_file, text)
    return root


class TestParseTable:
    def test_single_valid_patient(self, tmp_path):
        f = write(tmp_path / "patients.csv", PATIENT_HEADER + "p1,1960-05-01,,F,1000.50,200\n")
        (rec,) = parse_table(f, SCHEMAS["patients"])
        assert rec == ingest.PatientRecord("p1", date(1960, 5, 1), None, "F", 1000.5, 200.0)

    def test_header_only_is_empty(self, tmp_path):
        f = write(tmp_path / "patients.csv", PATIENT_HEADER)
        with pytest.raises(EmptyFile):
            parse_table(f, SCHEMAS["patients"])

    def test_zero_byte_file_is_empty(self, tmp_path):
        f = write(tmp_path / "patients.csv", "")
        with pytest.raises(EmptyFile):
            parse_table(f, SCHEMAS["patients"])

    def test_zero_dispenses_names_line_and_column(self, tmp_path):
        f = write(tmp_path / "m.csv", MED_HEADER + "2001-03-01,,p1,e1,m1,5,1,2,15\n2001-03-01,,p1,e1,m1,5,1,0,15\n")
        with pytest.raises(TypeError) as info:
            parse_table(f, SCHEMAS["medications"])
        err = info.value
        assert isinstance(err, FieldTypeError)
        assert [(line, col) for line, col, _, _ in err.problems] == [(3, "DISPENSES")]
        assert "line 3" in str(err) and "DISPENSES" in str(err)

    def test_bad_date_and_negative_money_all_reported(self, tmp_path):
        f = write(tmp_path / "p.csv", PATIENT_HEADER + "p1,yesterday,,F,1,1\np2,1970-01-01,,M,-5,1\n")
        with pytest.raises(FieldTypeError) as info:
            parse_table(f, SCHEMAS["patients"])
        assert {(l, c) for l, c, _, _ in info.value.problems} == {(2, "BIRTHDATE"), (3, "HEALTHCARE_EXPENSES")}

    def test_missing_required_column(self, tmp_path):
        f = write(tmp_path / "p.csv", "Id,BIRTHDATE,GENDER\np1,1960-01-01,F\n")
        with pytest.raises(MissingColumn) as info:
            parse_table(f, SCHEMAS["patients"])
        assert set(info.value.columns) == {"DEATHDATE", "HEALTHCARE_EXPENSES", "HEALTHCARE_COVERAGE"}

    def test_unknown_columns_ignored_with_warning(self, tmp_path, caplog):
        f = write(tmp_path / "p.csv", "Id,FIRST,BIRTHDATE,DEATHDATE,GENDER,HEALTHCARE_EXPENSES,HEALTHCARE_COVERAGE\n"
                                      "p1,Ann,1960-05-01,,F,1,2\n")
        with caplog.at_level("WARNING", logger="hosprisk.ingest"):
            (rec,) = parse_table(f, SCHEMAS["patients"])
        assert rec.id == "p1"
        assert "FIRST" in caplog.text

    def test_column_order_is_free(self, tmp_path):
        f = write(tmp_path / "p.csv", "GENDER,Id,HEALTHCARE_COVERAGE,HEALTHCARE_EXPENSES,BIRTHDATE,DEATHDATE\n"
                                      "M,p9,3,4,1950-02-03,\n")
        (rec,) = parse_table(f, "patients")
        assert (rec.id, rec.gender, rec.healthcare_expenses, rec.healthcare_coverage) == ("p9", "M", 4.0, 3.0)

    def test_death_before_birth_rejected(self, tmp_path):
        f = write(tmp_path / "p.csv", PATIENT_HEADER + "p1,1960-05-01,1950-01-01,F,1,1\n")
        with pytest.raises(FieldTypeError) as info:
            parse_table(f, "patients")
        assert info.value.problems[0][:2] == (2, "DEATHDATE")

    def test_stop_before_start_rejected(self, tmp_path):
        f = write(tmp_path / "c.csv", "START,STOP,PATIENT,ENCOUNTER,CODE\n2001-03-10,2001-03-01,p1,e1,c\n")
        with pytest.raises(FieldTypeError):
            parse_table(f, "conditions")

    def test_row_count_equals_data_lines(self, tmp_path):
        rows = "".join(f"p{i},1960-05-01,,F,1,1\n" for i in range(37))
        f = write(tmp_path / "p.csv", PATIENT_HEADER + rows)
        assert len(parse_table(f, "patients")) == 37

    def test_quoted_fields_and_ragged_rows(self, tmp_path):
        f = write(tmp_path / "c.csv", 'START,STOP,PATIENT,ENCOUNTER,CODE,DESCRIPTION\n2001-03-01,,p1,e1,c,"a, ""b"""\n')
        (rec,) = parse_table(f, "conditions")
        assert rec.description == 'a, "b"'
        bad = write(tmp_path / "c2.csv", "START,STOP,PATIENT,ENCOUNTER,CODE,DESCRIPTION\n2001-03-01,,p1\n")
        with pytest.raises(FieldTypeError):
            parse_table(bad, "conditions")


class TestDates:
    def test_date_only_is_midnight(self):
        assert ingest.parse_datetime("2004-07-09") == datetime(2004, 7, 9)

    def test_zulu_and_offset_normalized(self):
        assert ingest.parse_datetime("2004-07-09T10:00:00Z") == datetime(2004, 7, 9, 10)
        assert ingest.parse_datetime("2004-07-09T12:00:00+02:00") == datetime(2004, 7, 9, 10)

    def test_locale_independent_decimal_point(self, tmp_path):
        f = write(tmp_path / "p.csv", PATIENT_HEADER + 'p1,1960-05-01,,F,"1,5",1\n')
        with pytest.raises(FieldTypeError):
            parse_table(f, "patients")


class TestLoadDataset:
    def test_minimal_directory(self, tmp_path):
        ds = load_dataset(minimal_dir(tmp_path))
        assert ds.counts()["patients"] == 2
        assert ds.encounters[0].encounter_class == "wellness"
        assert ds.encounters[1].stop is None
        ev = ds.by_patient["p1"]
        assert len(ev.encounters) == 1 and len(ev.medications) == 1 and len(ev.conditions) == 1
        assert ds.by_patient["p2"].conditions == ()

    def test_missing_allergies_file(self, tmp_path):
        minimal_dir(tmp_path)
        os.remove(tmp_path / "allergies.csv")
        with pytest.raises(MissingTable, match="allergies"):
            load_dataset(tmp_path)

    def test_custom_file_names(self, tmp_path):
        minimal_dir(tmp_path)
        shutil.move(tmp_path / "allergies.csv", tmp_path / "allergy_export.csv")
        ds = load_dataset(tmp_path, file_names={"allergies": "allergy_export.csv"})
        assert ds.counts()["allergies"] == 0

    def test_encounter_of_deleted_patient(self, tmp_path):
        minimal_dir(tmp_path)
        write(tmp_path / "patients.csv", PATIENT_HEADER + "p1,1960-05-01,,F,1000.50,200\n")
        with pytest.raises(DanglingReference) as info:
            load_dataset(tmp_path)
        assert "e2" in info.value.offending_ids
        assert ("encounters", "e2", "PATIENT", "p2") in info.value.problems

    def test_duplicate_patient_id(self, tmp_path):
        minimal_dir(tmp_path)
        write(tmp_path / "patients.csv", PATIENT_HEADER + "p1,1960-05-01,,F,1,2\np1,1960-05-01,,F,1,2\np2,1970-01-01,,M,0,0\n")
        with pytest.raises(DanglingReference, match="duplicate"):
            load_dataset(tmp_path)

    def test_synthetic_corpus_counts_match_manifest(self, corpus50):
        path, manifest = corpus50
        ds = load_dataset(path)
        assert ds.counts()["patients"] == 50
        assert ds.counts() == manifest.counts

    def test_every_encounter_resolves(self, corpus50):
        ds = load_dataset(corpus50[0])
        ids = {p.id for p in ds.patients}
        assert all(e.patient_id in ids for e in ds.encounters)
        assert sum(len(ev.encounters) for ev in ds.by_patient.values()) == len(ds.encounters)

    def test_parallel_parse_is_identical(self, corpus50):
        a = load_dataset(corpus50[0], workers=1)
        b = load_dataset(corpus50[0], workers=4)
        assert a == b

    def test_csv_is_rfc4180(self, corpus50):
        with open(os.path.join(corpus50[0], "patients.csv"), newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][0] == "Id" and len(rows) == 51
