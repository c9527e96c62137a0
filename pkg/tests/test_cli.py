import json

from conftest import type8_dataset
from osrkit import synthetic
from osrkit.cli import main
from osrkit.dataset import write_dataset, write_schema


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def dataset_files(tmp_path, d, stem="data"):
    return (write(tmp_path, f"{stem}.csv", write_dataset(d)),
            write(tmp_path, f"{stem}.schema", write_schema(d.variables)))


RAW = """id,OS,Lang,Size,productivity
p1,Win2000,C,100,1.0
p2,Windows 2000,C,,1.2
p3,Linux,Java,300,0.8
p4,Linux,,400,1.1
p5,Linux,C,500,0.9
p6,Linux,Java,600,1.3
p7,Linux,C,700,0.7
p8,Linux,Java,800,1.0
p9,Linux,C,900,1.4
p10,Linux,Java,1000,1.0
"""
RAW_SCHEMA = "OS,nominal,independent\nLang,nominal,independent\nSize,continuous,independent\n" \
             "Rare,nominal,independent\nproductivity,continuous,dependent\n"


def raw_with_rare():
    lines = RAW.splitlines()
    out = [lines[0] + ",Rare"] + [line + ("," + ("x" if i == 1 else "")) for i, line in enumerate(lines[1:], 1)]
    return "\n".join(out) + "\n"


def test_prep_pipeline(tmp_path, capsys):
    data = write(tmp_path, "raw.csv", raw_with_rare())
    schema = write(tmp_path, "raw.schema", RAW_SCHEMA)
    mapping = write(tmp_path, "map.csv", "variable,old_label,new_label\n"
                    "OS,Win2000,Windows\nOS,Windows 2000,Windows\n")
    out = tmp_path / "out"
    assert main(["prep", "--data", data, "--schema", schema, "--mapping", mapping,
                 "--outlier-var", "Size", "--out", str(out)]) == 0
    printed = capsys.readouterr().out
    assert "remapped 2 cells" in printed
    assert printed.strip().splitlines()[-1].startswith("10 3 ")
    cleaned = (out / "cleaned.csv").read_text()
    assert "Win2000" not in cleaned and "Windows 2000" not in cleaned
    assert cleaned.count("Windows") == 2
    assert "Rare,dropped,missing_ratio" in (out / "selection.csv").read_text()
    assert "Rare" not in (out / "cleaned.schema").read_text()


def test_prep_split_rule(tmp_path):
    data = write(tmp_path, "raw.csv", RAW)
    schema = write(tmp_path, "raw.schema", RAW_SCHEMA.replace("Rare,nominal,independent\n", ""))
    splits = write(tmp_path, "split.csv", "variable,old_label,os_type,os_version\n"
                   "OS,Win2000,Windows,2000\nOS,Windows 2000,Windows,2000\nOS,Linux,Linux,\n")
    out = tmp_path / "out"
    assert main(["prep", "--data", data, "--schema", schema, "--splits", splits,
                 "--out", str(out)]) == 0
    header = (out / "cleaned.csv").read_text().splitlines()[0]
    assert header == "id,Lang,Size,productivity,os_type"
    assert "os_version,dropped,missing_ratio" not in (out / "selection.csv").read_text()
    assert "os_version,dropped,constant" in (out / "selection.csv").read_text()


def test_prep_clean_input_is_identity(tmp_path):
    d = synthetic.heterogeneous(1, n=20, missing=0.0)
    data, schema = dataset_files(tmp_path, d)
    out = tmp_path / "out"
    assert main(["prep", "--data", data, "--schema", schema, "--out", str(out)]) == 0
    assert (out / "cleaned.csv").read_text() == open(data).read()
    assert (out / "outliers.csv").read_text() == "project_id,variable,class,value\n"
    assert "dropped" not in (out / "selection.csv").read_text()


def test_prep_error_reports_position(tmp_path, capsys):
    data = write(tmp_path, "raw.csv", RAW.replace("300", "3OO"))
    schema = write(tmp_path, "raw.schema", RAW_SCHEMA.replace("Rare,nominal,independent\n", ""))
    assert main(["prep", "--data", data, "--schema", schema, "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "raw.csv" in err and "line 4" in err and "'Size'" in err


def subset_a_fixture():
    """72 projects x 30 independent variables, 124 blank cells (5.56%)."""
    header = "id," + ",".join(f"c{j}" for j in range(30)) + ",y"
    lines = [header]
    blanks = 0
    for i in range(72):
        cells = []
        for j in range(30):
            blank = blanks < 124 and (i * 30 + j) % 17 == 0
            blanks += blank
            cells.append("" if blank else str(i + j))
        lines.append(f"p{i}," + ",".join(cells) + ",1.5")
    assert blanks == 124
    schema = "".join(f"c{j},continuous,independent\n" for j in range(30)) + "y,continuous,dependent\n"
    return "\n".join(lines) + "\n", schema


def test_summary_table_line(tmp_path, capsys):
    text, schema = subset_a_fixture()
    data = write(tmp_path, "a.csv", text)
    schema = write(tmp_path, "a.schema", schema)
    assert main(["summary", "--data", data, "--schema", schema, "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.splitlines()[0] == "72 30 5.56%"
    box = (tmp_path / "box_summary.csv").read_text().splitlines()
    assert box[1] == "variable,n,min,q1,median,q3,max,mean,sd" and len(box) == 33


def test_summary_box_and_extreme(tmp_path, capsys):
    data = write(tmp_path, "d.csv", "id,fp,y\na,1,1\nb,2,1\nc,3,1\nd,4,1\ne,100,1\n")
    schema = write(tmp_path, "d.schema", "fp,continuous,independent\ny,continuous,dependent\n")
    assert main(["summary", "--data", data, "--schema", schema, "--out", str(tmp_path)]) == 0
    box = (tmp_path / "box_summary.csv").read_text()
    assert "fp,5,1,2,3,4,100,22,39" in box
    flags = (tmp_path / "outliers.csv").read_text().splitlines()[1:]
    assert flags == ["e,fp,extreme,100"]
    assert "e: fp = 100 (extreme)" in capsys.readouterr().out


def test_summary_needs_continuous(tmp_path):
    data = write(tmp_path, "d.csv", "id,t\na,x\n")
    schema = write(tmp_path, "d.schema", "t,nominal,independent\n")
    assert main(["summary", "--data", data, "--schema", schema, "--out", str(tmp_path)]) == 1


def test_summary_unchanged_by_empty_mapping(tmp_path, capsys):
    d = synthetic.heterogeneous(2, n=30)
    data, schema = dataset_files(tmp_path, d)
    empty = write(tmp_path, "map.csv", "variable,old_label,new_label\n")
    main(["summary", "--data", data, "--schema", schema, "--out", str(tmp_path / "s1")])
    direct = capsys.readouterr().out
    main(["prep", "--data", data, "--schema", schema, "--mapping", empty, "--max-missing", "1.0",
          "--project-missing", "1.0", "--out", str(tmp_path / "p")])
    capsys.readouterr()
    main(["summary", "--data", str(tmp_path / "p" / "cleaned.csv"),
          "--schema", str(tmp_path / "p" / "cleaned.schema"), "--out", str(tmp_path / "s2")])
    assert capsys.readouterr().out == direct


def analyze_args(tmp_path, d, out, *extra):
    data, schema = dataset_files(tmp_path, d)
    return ["analyze", "--data", data, "--schema", schema, "--size-var", synthetic.SIZE,
            "--out", str(out), *extra]


def test_analyze_single_combo(tmp_path):
    d = synthetic.heterogeneous(3, n=40)
    out = tmp_path / "run"
    assert main(analyze_args(tmp_path, d, out, "--grid", "single:(Mean,MSD,10,3)", "--seed", "42")) == 0
    report = json.loads((out / "grid_report.json").read_text())
    assert len(report["cells"]) == 1 and report["seed"] == 42
    for name in ("comparison.txt", "comparison.csv", "estimates.csv"):
        assert (out / name).read_text().startswith("# osrkit 0.1.0 analyze seed=42")


def test_analyze_default_grid(tmp_path):
    d = synthetic.heterogeneous(4, n=60)
    out = tmp_path / "run"
    assert main(analyze_args(tmp_path, d, out, "--label", "H")) == 0
    report = json.loads((out / "grid_report.json").read_text())
    assert len(report["cells"]) == 36
    csv_rows = (out / "comparison.csv").read_text().splitlines()
    mmre = csv_rows[2].split(",")
    assert mmre[0] == "MMRE" and float(mmre[7]) < float(mmre[6]) and mmre[8] == ">"


def test_analyze_is_deterministic(tmp_path):
    d = synthetic.heterogeneous(5, n=30)
    outputs = []
    for k, jobs in enumerate(("1", "2")):
        out = tmp_path / f"run{k}"
        args = analyze_args(tmp_path, d, out, "--grid", "(Mean,MSD,5,2);(Median,MAD,10,3)",
                            "--seed", "42", "--jobs", jobs)
        assert main(args) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0] == outputs[1]


def test_analyze_nominal_size_var(tmp_path, capsys):
    d = type8_dataset()
    data, schema = dataset_files(tmp_path, d)
    args = ["analyze", "--data", data, "--schema", schema, "--size-var", "Type",
            "--grid", "single:(Mean,MSD,10,3)", "--out", str(tmp_path)]
    assert main(args) == 1  # nominal size variable is a validation error


def test_analyze_infeasible_exit_code(tmp_path, capsys):
    d = synthetic.heterogeneous(3, n=12)
    assert main(analyze_args(tmp_path, d, tmp_path / "o", "--grid", "single:(Mean,MSD,20,3)")) == 2
    assert "infeasible" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    d = synthetic.heterogeneous(3, n=30)
    config = write(tmp_path, "run.json", json.dumps({"seed": 7, "grid": "single:(Mean,MSD,5,2)",
                                                    "draws": 200}))
    out = tmp_path / "o"
    assert main(analyze_args(tmp_path, d, out, "--config", config, "--seed", "9")) == 0
    report = json.loads((out / "grid_report.json").read_text())
    assert (report["seed"], report["draws"], len(report["cells"])) == (9, 200, 1)


def predict_files(tmp_path, target_text):
    data, schema = dataset_files(tmp_path, type8_dataset())
    target = write(tmp_path, "target.csv", target_text)
    return ["predict", "--data", data, "--schema", schema, "--target", target,
            "--grid", "single:(Mean,MSD,4,2)", "--seed", "11"]


def test_predict_type_new(tmp_path, capsys):
    assert main(predict_files(tmp_path, "project_id,Type\nnew1,New\n")) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[1] == "1.0, model: Type = New (n=4)"
    assert lines[2].strip().startswith("Type = New => 1 (n=4, p25=")


def test_predict_all_missing_falls_back(tmp_path, capsys):
    assert main(predict_files(tmp_path, "project_id,Type,productivity\nnew1,,\n")) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1] == "1.5, model: all projects (n=8)"
    assert "low confidence" in out


def test_predict_rejects_bad_pairing(tmp_path, capsys):
    args = predict_files(tmp_path, "project_id,Type\nnew1,New\n")
    args[args.index("--grid") + 1] = "single:(Median,MSD,4,2)"
    assert main(args) == 1
    assert "Median, MAD" in capsys.readouterr().err
    assert main(args + ["--allow-any-pairing"]) == 0


def test_predict_schema_mismatch(tmp_path, capsys):
    assert main(predict_files(tmp_path, "project_id,Colour\nnew1,red\n")) == 1
    assert "Colour" in capsys.readouterr().err
