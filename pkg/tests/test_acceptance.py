"""Exit criteria. Each test carries an ``acceptance`` marker and the run ends
with one PASS/FAIL line per criterion (see conftest.py).

Tolerances are fixed here and must not be loosened to make a run pass.
"""

import io
import math
import random
import sys
import time
import zipfile
from dataclasses import replace

import pytest

from apkfixtures import FixtureSpec, write_apk
from conftest import make_raw, model_from_rates
from oracles import edit_distance_brute, lcs_brute
from certdroid.blacklist import SerialBlacklist, build_blacklist
from certdroid.classifier import (
    GroupSignature,
    classify_stream,
    group_accuracy,
    levenshtein,
    needleman_wunsch_score,
    perm_string_similarity,
    sim_api,
    similarity_score,
)
from certdroid.cli import main
from certdroid.detector import (
    BLACKLIST,
    LIKELIHOOD_BEHAVIOR,
    ROOT_COMMAND,
    SMS_CONCEALMENT,
    STAGES,
    DetectorParams,
    detect,
)
from certdroid.errors import (
    DexMalformed,
    IngestError,
    ManifestMalformed,
    ManifestMissing,
    NoCertificate,
    NotAnArchive,
)
from certdroid.evalkit import (
    USAGE_RATES,
    SyntheticSpec,
    gen_family_spread_corpus,
    gen_synthetic_corpus,
    run_cv,
)
from certdroid.features import extract_profile
from certdroid.ingest import parse_apk
from certdroid.likelihood import ChannelCounts, LikelihoodModel, likelihood_ratio, train
from certdroid.serial import SerialNumber

ORACLE_PAIRS = 1000
ORACLE_MAX_LEN = 8
ORACLE_BUDGET_S = 10.0
ALGEBRA_MODELS = 500
ALGEBRA_RTOL = 1e-9
RATE_TOL_PP = 0.5
PHONE_STATE_LAMBDA = (4.0, 0.1)
BLACKLIST_SIZE = 136
FUZZED_PROFILES = 10_000
INTRA_MIN, INTER_MAX = 0.9, 0.4
E2E_BUDGET_S = 60.0
INGEST_FUZZ_CASES = 2000


@pytest.mark.acceptance("oracle equivalence: alignment = brute LCS, edit distance = brute recursion")
def test_similarity_oracles():
    rng = random.Random(20240601)
    start = time.perf_counter()
    for _ in range(ORACLE_PAIRS):
        a = "".join(rng.choice("abcde") for _ in range(rng.randint(0, ORACLE_MAX_LEN)))
        b = "".join(rng.choice("abcde") for _ in range(rng.randint(0, ORACLE_MAX_LEN)))
        lcs = lcs_brute(a, b)
        longest = max(len(a), len(b))
        assert needleman_wunsch_score(a, b) == lcs
        assert sim_api(a, b) == (lcs / longest if longest else 1.0)
        dist = edit_distance_brute(a, b)
        assert levenshtein(a, b) == dist
        assert perm_string_similarity(a, b) == (1 - dist / longest if longest else 1.0)
    assert time.perf_counter() - start < ORACLE_BUDGET_S


@pytest.mark.acceptance("likelihood algebra: factorization and monotonicity on 500 random models")
def test_likelihood_algebra():
    rng = random.Random(7)
    m = 26
    for _ in range(ALGEBRA_MODELS):
        nb, nm = rng.randint(0, 5000), rng.randint(0, 5000)
        cb = tuple(rng.randint(0, nb) for _ in range(m))
        cm = tuple(rng.randint(0, nm) for _ in range(m))
        ch = ChannelCounts(nb, nm, cb, cm)
        model = LikelihoodModel({"requested": ch}, "t")
        a = [rng.randint(0, 1) for _ in range(m)]

        factors = []
        for j in range(m):
            pm, pb = (cm[j] + 1) / (nm + 2), (cb[j] + 1) / (nb + 2)
            assert 0 < pm < 1 and 0 < pb < 1
            assert 0 < ch.p_present(j, True) < 1 and 0 < ch.p_present(j, False) < 1
            factors.append(pm / pb if a[j] else (1 - pm) / (1 - pb))
        assert math.isclose(likelihood_ratio(model, a), math.prod(factors), rel_tol=ALGEBRA_RTOL)

        j = rng.randrange(m)
        on, off = list(a), list(a)
        on[j], off[j] = 1, 0
        ratio = likelihood_ratio(model, on) / likelihood_ratio(model, off)
        pm, pb = ch.p_present(j, True), ch.p_present(j, False)
        expected = (pm / pb) / ((1 - pm) / (1 - pb))
        assert math.isclose(ratio, expected, rel_tol=ALGEBRA_RTOL)
        if pm > pb:
            assert ratio > 1
        elif pm < pb:
            assert ratio < 1


@pytest.mark.acceptance("usage-rate reproduction: all 26 rates within 0.5 pp, READ_PHONE_STATE ratio 4.0 +/- 0.1")
def test_usage_rate_reproduction(cfg):
    spec = SyntheticSpec(n_families=5, samples_per_family=400, n_benign=2000, usage_rates=True)
    corpus = gen_synthetic_corpus(spec, seed=11, cfg=cfg)
    # independent recount straight from the generated manifests
    by_class = {False: [], True: []}
    for raw in corpus.raws:
        by_class[corpus.labels[raw.sha256] != "benign"].append(raw.manifest.requested_permissions)
    for perm, (ben, mal, _, _) in USAGE_RATES.items():
        for is_mal, target in ((False, ben), (True, mal)):
            group = by_class[is_mal]
            rate = 100 * sum(perm in req for req in group) / len(group)
            assert abs(rate - target) <= RATE_TOL_PP, (perm, is_mal, rate, target)

    model = train(corpus.labeled(cfg).profiles, cfg)
    j = cfg.permission_index["READ_PHONE_STATE"]
    single = math.exp(model.channel("requested").log_factor(j, 1))
    centre, tol = PHONE_STATE_LAMBDA
    assert abs(single - centre) <= tol
    assert abs(single - 96.55 / 24.10) <= 0.01


@pytest.mark.acceptance("blacklist rule: family-spread corpus gives exactly 136 serials, test keys excluded")
def test_blacklist_size(cfg):
    profiles, expected = gen_family_spread_corpus(seed=3, cfg=cfg)
    assert sum(v for k, v in expected.items() if k >= 2) == BLACKLIST_SIZE
    bl = build_blacklist(profiles, cfg, built_at="")
    assert len(bl) == BLACKLIST_SIZE
    assert bl.excluded_test_keys == cfg.test_key_serials
    assert not bl.entries & cfg.test_key_serials


@pytest.mark.acceptance("detector gates: 12 hand-built cases exact, verdict iff reasons over 10,000 fuzzed profiles")
def test_detector_gates(cfg):
    j = cfg.permission_index["READ_PHONE_STATE"]
    mal, ben = [0.5] * 26, [0.5] * 26
    mal[j], ben[j] = 0.9655, 0.2410
    model = model_from_rates(mal, ben, fingerprint=cfg.fingerprint)
    bad = SerialNumber.from_display("0a:0a")
    bl = SerialBlacklist(frozenset({bad}))
    base = extract_profile(make_raw(), cfg)
    phone = tuple(int(k == j) for k in range(26))
    everything = replace(base, serials=(bad,), api_string="p", commands=frozenset({"su"}),
                         sends_sms=True, hides_sms=True, requested_critical=phone)
    sc, ex = DetectorParams(), DetectorParams(short_circuit=False)
    cases = [
        (replace(base, serials=(bad,), api_string="g"), sc, [BLACKLIST]),
        (replace(base, serials=(bad,)), sc, []),
        (replace(base, commands=frozenset({"su", "chmod"})), sc, [ROOT_COMMAND]),
        (replace(base, api_string="a"), sc, []),
        (replace(base, sends_sms=True, hides_sms=True), sc, [SMS_CONCEALMENT]),
        (replace(base, hides_sms=True), sc, []),
        (replace(base, requested_critical=phone, sensitive_count=2), sc, [LIKELIHOOD_BEHAVIOR]),
        (replace(base, requested_critical=phone, sensitive_count=1), sc, []),
        (everything, sc, [BLACKLIST]),
        (everything, ex, list(STAGES)),
        (replace(everything, serials=()), sc, [ROOT_COMMAND]),
        (replace(everything, serials=(), requested_critical=(0,) * 26), ex, [ROOT_COMMAND, SMS_CONCEALMENT]),
    ]
    assert len(cases) == 12
    for profile, params, reasons in cases:
        v = detect(profile, bl, model, params)
        assert list(v.reasons) == reasons
        assert v.malicious == bool(reasons)

    rng = random.Random(99)
    serial_pool = [(), (bad,), (SerialNumber.from_int(3),), (bad, SerialNumber.from_int(3))]
    for _ in range(FUZZED_PROFILES):
        p = replace(base,
                    serials=rng.choice(serial_pool),
                    api_string="".join(rng.choice("apg0") for _ in range(rng.randint(0, 3))),
                    commands=frozenset(c for c in ("su", "sh") if rng.random() < 0.15),
                    sends_sms=rng.random() < 0.3, hides_sms=rng.random() < 0.3,
                    sensitive_count=rng.randint(0, 4),
                    requested_critical=tuple(int(rng.random() < 0.3) for _ in range(26)),
                    api_related_critical=tuple(int(rng.random() < 0.2) for _ in range(26)))
        params = rng.choice([sc, ex])
        v = detect(p, bl, model, params)
        assert v.malicious == bool(v.reasons)
        assert list(v.reasons) == sorted(set(v.reasons), key=STAGES.index)
        if params.short_circuit:
            assert len(v.reasons) <= 1


@pytest.mark.acceptance("classifier separability: T_S 0.7 recovers the families exactly, T_S 0.95 fragments")
def test_classifier_separability(cfg):
    corpus = gen_synthetic_corpus(SyntheticSpec(), seed=0, cfg=cfg)
    profiles = [p for p in corpus.labeled(cfg).profiles if p.is_malicious]
    sigs = [GroupSignature.from_profile(p, cfg) for p in profiles]
    intra, inter = 1.0, 0.0
    for i in range(len(sigs)):
        for k in range(i + 1, len(sigs)):
            ss = similarity_score(sigs[i], sigs[k])
            if profiles[i].label == profiles[k].label:
                intra = min(intra, ss)
            else:
                inter = max(inter, ss)
    assert intra >= INTRA_MIN and inter <= INTER_MAX, (intra, inter)

    truth = {p.sha256: p.label for p in profiles}
    shuffled = list(profiles)
    random.Random(5).shuffle(shuffled)
    gs = classify_stream(shuffled, 0.7, cfg=cfg)
    partition = {frozenset(g.members) for g in gs.groups}
    families = {}
    for sha, lab in truth.items():
        families.setdefault(lab, set()).add(sha)
    assert partition == {frozenset(v) for v in families.values()}
    acc = group_accuracy(gs, truth)
    assert acc.overall == 1.0 and all(a.accuracy == 1.0 for a in acc.per_family.values())

    strict = classify_stream(shuffled, 0.95, cfg=cfg)
    assert len(strict.groups) > len(gs.groups)

    report = run_cv(corpus.labeled(cfg), cfg, k=5, seed=0, T_S=0.7)
    assert report.classification_accuracy() == 1.0


def _pipeline(root, corpus_dir):
    ws = root / "ws"
    steps = [
        ["extract", "-w", ws, corpus_dir / "profiles", "--labels", corpus_dir / "labels.tsv"],
        ["train", "-w", ws], ["blacklist", "-w", ws], ["scan", "-w", ws],
        ["classify", "-w", ws], ["eval", "-w", ws], ["report", "-w", ws],
    ]
    for argv in steps:
        assert main([str(a) for a in argv]) == 0, argv
    return ws


def _snapshot(ws):
    return {str(p.relative_to(ws)): p.read_bytes()
            for p in sorted(ws.rglob("*")) if p.is_file() and p.name != ".lock"}


@pytest.mark.acceptance("end to end: 600-profile pipeline under 60 s, marginals reconcile, reruns byte-identical")
def test_end_to_end(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    start = time.perf_counter()
    corpus_dir = tmp_path / "corpus"
    assert main(["synth", "--out", str(corpus_dir), "--seed", "0"]) == 0
    first = _pipeline(tmp_path / "a", corpus_dir)
    elapsed = time.perf_counter() - start
    second = _pipeline(tmp_path / "b", corpus_dir)
    capsys.readouterr()
    assert elapsed < E2E_BUDGET_S

    rows = (first / "reports" / "cv_confusion.tsv").read_text().splitlines()
    assert rows[0] == "actual\tpredicted_malicious\tpredicted_benign"
    (_, tp, fn), (_, fp, tn) = (r.split("\t") for r in rows[1:])
    tp, fn, fp, tn = map(int, (tp, fn, fp, tn))
    assert tp + fn == 400 and fp + tn == 200 and tp + fn + fp + tn == 600

    snap_a, snap_b = _snapshot(first), _snapshot(second)
    assert sorted(snap_a) == sorted(snap_b)
    differing = [name for name in snap_a if snap_a[name] != snap_b[name]]
    assert differing == []


def _mutants(apk: bytes, rng: random.Random):
    for _ in range(INGEST_FUZZ_CASES):
        buf = bytearray(apk)
        kind = rng.randrange(3)
        if kind == 0:
            buf = buf[:rng.randrange(len(buf) + 1)]
        elif kind == 1:
            for _ in range(rng.randint(1, 16)):
                buf[rng.randrange(len(buf))] = rng.randrange(256)
        else:
            pos = rng.randrange(len(buf) + 1)
            buf[pos:pos] = bytes(rng.randrange(256) for _ in range(rng.randint(1, 64)))
        yield bytes(buf)


def _replace_entry(apk: bytes, name: str, data: bytes | None) -> bytes:
    src = zipfile.ZipFile(io.BytesIO(apk))
    out = io.BytesIO()
    with zipfile.ZipFile(out, "w") as dst:
        for info in src.infolist():
            if info.filename != name:
                dst.writestr(info, src.read(info))
            elif data is not None:
                dst.writestr(name, data)
    return out.getvalue()


@pytest.mark.acceptance("ingest fixtures: minimal APK parses exactly, mutated inputs raise only declared errors")
def test_ingest_fixtures(cfg):
    apk = write_apk(FixtureSpec())
    raw = parse_apk(apk)
    assert [s.display for s in raw.cert_serials] == ["93:6e:ac:be:07:f2:01:df"]
    assert raw.manifest.requested_permissions == {"SEND_SMS", "READ_SMS"}
    assert raw.dex_strings == ("a", "getDeviceId", "su")
    profile = extract_profile(raw, cfg)
    assert profile.api_string == "a" and profile.commands == {"su"}
    assert sum(profile.requested_critical) == 2

    expected_errors = [
        (b"", NotAnArchive),
        (write_apk(FixtureSpec(with_manifest=False)), ManifestMissing),
        (write_apk(FixtureSpec(with_signature=False)), NoCertificate),
        (_replace_entry(apk, "classes.dex", b"dex\n035\x00"), DexMalformed),
        (_replace_entry(apk, "AndroidManifest.xml", b"\x03\x00\x08\x00\xff\xff\x00\x00"), ManifestMalformed),
    ]
    for data, err in expected_errors:
        with pytest.raises(err):
            parse_apk(data)

    outcomes = {"parsed": 0, "rejected": 0}
    for mutant in _mutants(apk, random.Random(1234)):
        try:
            parse_apk(mutant)
            outcomes["parsed"] += 1
        except IngestError:
            outcomes["rejected"] += 1
    assert sum(outcomes.values()) == INGEST_FUZZ_CASES
    assert outcomes["rejected"] > 0


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
