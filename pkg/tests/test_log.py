from validity_domain import log
from validity_domain.log import LogLevel


def test_levels_go_to_their_streams(capsys):
    log.set_quietness(0)
    log.info("solving")
    log.debug("hidden")
    log.warn("careful")
    out, err = capsys.readouterr()
    assert "solving" in out and "hidden" not in out
    assert "careful" in err and "careful" not in out


def test_quietness_counts():
    log.set_quietness(-1)
    assert log.is_enabled(LogLevel.DEBUG)
    log.set_quietness(2)
    assert not log.is_enabled(LogLevel.WARN)
    assert log.is_enabled(LogLevel.ERROR)
    log.set_quietness(10)
    assert not log.is_enabled(LogLevel.FATAL)


def test_multiline_messages_are_indented(capsys):
    log.set_quietness(0)
    log.info("Result:\nshape f_star")
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    assert lines[1].strip() == "shape f_star"
    assert lines[1].startswith(" " * 31)


def test_stage_logs_start_and_end(capsys):
    log.set_quietness(0)
    with log.stage("Convex hull"):
        pass
    out = capsys.readouterr().out
    assert "Convex hull..." in out
    assert "Convex hull done in" in out
