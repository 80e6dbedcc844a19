import pytest

from modlock.cli import build_parser, main

FEW = ["--set", "workload.total_ops=60"]


def test_scenarios_lists_builtins(capsys):
    main(["scenarios"])
    out = capsys.readouterr().out.split()
    assert "smartnic_modular" in out
    assert "grant_race" in out


def test_run_writes_csv(capsys):
    main(["run", "grant_race", *FEW])
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "scenario,seed,metric,value"
    assert "grant_race,1,acquires,60" in lines


def test_run_to_files(tmp_path):
    out = tmp_path / "metrics.csv"
    history = tmp_path / "history.jsonl"
    main(["--seed", "4", "run", "grant_race", *FEW, "--out", str(out), "--history", str(history)])
    assert "grant_race,4,acquires,60" in out.read_text().splitlines()
    # four events per operation, plus one per aborted promotion
    assert len(history.read_text().splitlines()) >= 60 * 4


def test_seed_after_the_subcommand(monkeypatch, capsys):
    monkeypatch.setenv("MODLOCK_SEED", "9")
    main(["run", "grant_race", "--seed", "3", *FEW])
    assert "grant_race,3,acquires,60" in capsys.readouterr().out.splitlines()
    main(["--seed", "5", "run", "grant_race", *FEW])
    assert "grant_race,5,acquires,60" in capsys.readouterr().out.splitlines()


def test_seed_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("MODLOCK_SEED", "9")
    main(["run", "grant_race", *FEW])
    assert "grant_race,9,acquires,60" in capsys.readouterr().out.splitlines()
    monkeypatch.setenv("MODLOCK_SEED", "nine")
    with pytest.raises(SystemExit) as info:
        main(["run", "grant_race", *FEW])
    assert info.value.code == 2
    assert "MODLOCK_SEED" in capsys.readouterr().err


def test_plan_ranks_and_emits(capsys):
    main(["plan", "smartnic_base", "--limit", "2"])
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 3
    assert "mode+grant@nic holder+waiter@server" in lines[1]
    main(["plan", "dm_base", "--emit"])
    assert 'grant = "cn"' in capsys.readouterr().out


def test_verify_ok(capsys):
    main(["verify", "grant_race", "--seeds", "2", "--micro", "3", "--race", "2", *FEW])
    assert capsys.readouterr().out.startswith("Verify grant_race: OK (2 workload, 3 micro, 2 race;")


def test_verify_without_validation_fails(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "grant_race", "--seeds", "0", "--race", "1", "--no-validate"])
    assert info.value.code == 1
    assert "verify: race seed 1: mutual exclusion" in capsys.readouterr().err


def test_compare_reports_reduction(capsys):
    main(["compare", "dm_polling_baseline", "dm_modular", "--set", "workload.total_ops=100"])
    out = capsys.readouterr().out
    assert "mn lock communication reduced by" in out
    assert out.splitlines()[0].split()[:3] == ["metric", "dm_polling_baseline", "dm_modular"]


def test_config_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "no_such_scenario"])
    assert info.value.code == 2
    assert capsys.readouterr().err.startswith("error: scenario not found")


def test_infeasible_plan_exits_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["run", "smartnic_monolithic_nic", "--set", "workload.num_locks=1000000"])
    assert info.value.code == 2


def test_subcommand_required():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
