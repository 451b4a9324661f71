'''
Experiment reports

An ExperimentReport collects one record per run, aggregate numbers, the verdicts a
study declares and the series it wants plotted. Written out it becomes

    <outdir>/<study>/report.json    summary, verdicts, provenance
    <outdir>/<study>/runs.csv       one row per run record
    <outdir>/<study>/<series>.dat   whitespace separated columns for gnuplot
    <outdir>/<study>/<run>/         trajectory directories, when output.save_trajectories

report.json is canonical JSON (sorted keys, plain floats). Its timestamp field is the
only part that changes between reruns of one config and seed, and it is left out of
report_hash.
'''
import csv
import os

from collections import OrderedDict

from django.utils.timezone import localtime, now

from ..numerics.enums import Verdict
from ..numerics.storage import save_trajectory
from ..numerics.util import canonical_json, plain, sha256_of

from Site.logutils import log


class ExperimentReport:
    '''
    Evidence gathered by one study.

    Every verdict names the config key of the tolerance it was judged by, and the value
    of that tolerance.
    '''

    def __init__(self, study, config, provenance=None):
        self.study = study
        self.config = config
        self.provenance = dict(provenance or {})
        self.records = []
        self.aggregates = OrderedDict()
        self.verdicts = []
        self.notes = []
        self.series = OrderedDict()
        self.trajectories = OrderedDict()

    def __repr__(self):
        return f"ExperimentReport({self.study}, {len(self.records)} runs, {self.summary()})"

    def add_run(self, **record):
        self.records.append(record)
        return record

    def aggregate(self, name, value):
        self.aggregates[name] = value

    def note(self, text):
        log.info(f"{self.study}: {text}")
        self.notes.append(text)

    def verdict(self, name, passed, value, tolerance_key, tolerance):
        '''
        Declares a verdict. passed may be None for a check that could not be made, which
        is recorded as skipped.
        '''
        outcome = Verdict.skipped if passed is None else (Verdict.passed if passed else Verdict.failed)
        self.verdicts.append({"name": name,
                              "verdict": outcome.value,
                              "value": value,
                              "tolerance_key": tolerance_key,
                              "tolerance": tolerance})
        if outcome is Verdict.failed:
            log.warning(f"{self.study}: verdict '{name}' failed with {value!r} against {tolerance_key}={tolerance!r}")
        return outcome

    def skip(self, name, reason, tolerance_key=None, tolerance=None):
        self.note(f"{name} skipped: {reason}")
        return self.verdict(name, None, None, tolerance_key, tolerance)

    def add_series(self, name, columns, rows):
        self.series[name] = (list(columns), [list(r) for r in rows])

    def keep_trajectory(self, name, traj):
        '''
        Holds traj for writing next to the report, if the config asks for trajectories.
        '''
        if self.config.get("output", {}).get("save_trajectories"):
            self.trajectories[name] = traj

    def __getitem__(self, name):
        for v in self.verdicts:
            if v["name"] == name:
                return v
        raise KeyError(name)

    @property
    def failed(self):
        return [v for v in self.verdicts if v["verdict"] == Verdict.failed.value]

    @property
    def passed(self):
        return not self.failed

    def summary(self):
        counts = {o.value: 0 for o in Verdict}
        for v in self.verdicts:
            counts[v["verdict"]] += 1
        return ", ".join(f"{n} {k}" for k, n in counts.items())

    def as_dict(self):
        '''
        The report without its timestamp, the part that report_hash covers.
        '''
        return plain({"study": self.study,
                      "config": self.config,
                      "provenance": self.provenance,
                      "aggregates": self.aggregates,
                      "verdicts": self.verdicts,
                      "passed": self.passed,
                      "notes": self.notes,
                      "runs": self.records})

    def report_hash(self):
        return sha256_of(canonical_json(self.as_dict()))

    def write(self, outdir):
        '''
        Writes the report files and returns the study directory.
        '''
        directory = os.path.join(outdir, self.study)
        os.makedirs(directory, exist_ok=True)

        document = dict(self.as_dict(), report_hash=self.report_hash(), timestamp=localtime(now()).isoformat())
        with open(os.path.join(directory, "report.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(document, indent=1))
            fh.write("\n")

        self.write_runs(os.path.join(directory, "runs.csv"))
        for name, (columns, rows) in self.series.items():
            write_dat(os.path.join(directory, f"{name}.dat"), columns, rows)
        for name, traj in self.trajectories.items():
            save_trajectory(traj, os.path.join(directory, name), config=self.config)

        log.info(f"{self.study}: report written to {directory} ({self.summary()})")
        return directory

    def write_runs(self, path):
        '''
        runs.csv: the scalar fields of every run record, columns sorted by name.
        '''
        rows = [{k: v for k, v in plain(r).items() if not isinstance(v, (list, dict))} for r in self.records]
        columns = sorted(set().union(*rows)) if rows else []
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_dat(path, columns, rows):
    '''
    A gnuplot data file: a commented header naming the columns, then one line per row.
    '''
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + " ".join(columns) + "\n")
        for row in rows:
            fh.write(" ".join(repr(float(v)) if v is not None else "nan" for v in row) + "\n")
