from flowattest.protocol import (
    HOST_MEDIATED_SWITCHES,
    SM_MEDIATED_SWITCHES,
    ProtocolEvent,
    Role,
    VerifState,
    World,
    explore,
    load_scenario,
    run_scenario,
    standard_tandem_alphabet,
    step,
    tandem_world,
)
from flowattest.demos import happy_path_scenario


def _attach(world, value="h-tracer"):
    return step(world, ProtocolEvent("attach_as_tracer", "tracer", target="tracee", value=value))


def test_attach_with_matching_hash_makes_tracee_runnable():
    world, effects = _attach(tandem_world())
    assert effects[0][0] == "attached"
    assert world.get("tracee").runnable


def test_attach_with_wrong_hash_is_rejected():
    world, effects = _attach(tandem_world(), value="h-evil")
    assert effects[0][0] == "rejected"
    assert not world.get("tracee").runnable


def test_second_attach_is_rejected():
    world, _ = _attach(tandem_world())
    world, effects = _attach(world)
    assert effects[0][0] == "rejected"


def test_create_refuses_hash_on_non_tracee_roles():
    world = World()
    world, effects = step(
        world, ProtocolEvent("create", "t", target="TRACER", value="h-x")
    )
    assert effects[0][0] == "rejected"
    assert world.get("t") is None


def test_happy_path_read_succeeds_only_after_verdict():
    world = World()
    reads = []
    for event in load_scenario(happy_path_scenario()):
        world, effects = step(world, event)
        for effect in effects:
            assert effect[0] != "rejected", (event, effect)
            if effect[0] in ("read", "denied"):
                reads.append(effect[0])
    assert reads == ["read"]
    assert world.get("tracee").verif_state is VerifState.VERIFIED
    assert world.context_switches == HOST_MEDIATED_SWITCHES


def test_read_before_verdict_is_denied():
    world = tandem_world()
    world, _ = _attach(world)
    world, _ = step(world, ProtocolEvent("start", "tracee"))
    world, _ = step(world, ProtocolEvent("ecall", "tracee"))
    world, effects = step(world, ProtocolEvent("host_read_shm", "host", target="tracee"))
    assert effects[0][0] == "denied"
    assert world.get("tracee").verif_state is VerifState.PENDING


def test_rejection_is_absorbing():
    world = tandem_world()
    world, _ = _attach(world)
    world, _ = step(world, ProtocolEvent("start", "tracee"))
    world, _ = step(world, ProtocolEvent("ecall", "tracee"))
    world, effects = step(
        world,
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="reject"),
    )
    assert effects[0][0] == "halted"
    for _ in range(5):
        world, effects = step(world, ProtocolEvent("host_read_shm", "host", target="tracee"))
        assert effects[0][0] == "denied"
    # Neither restart nor re-verdict revives a halted tracee.
    world, effects = step(world, ProtocolEvent("start", "tracee"))
    assert effects[0][0] == "rejected"
    world, effects = step(
        world,
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="accept"),
    )
    assert effects[0][0] == "rejected"
    assert world.get("tracee").verif_state is VerifState.HALTED


def test_only_the_attached_tracer_may_set_state():
    world = tandem_world()
    world, _ = _attach(world)
    world, _ = step(world, ProtocolEvent("start", "tracee"))
    world, _ = step(world, ProtocolEvent("ecall", "tracee"))
    for actor in ("host", "tracee", "stranger"):
        _, effects = step(
            world,
            ProtocolEvent("set_cfa_verification_state", actor, target="tracee", value="accept"),
        )
        assert effects[0][0] == "rejected"


def test_tracee_never_runs_without_tracer():
    world = tandem_world()
    world, effects = step(world, ProtocolEvent("start", "tracee"))
    assert effects[0][0] == "rejected"
    world, effects = step(world, ProtocolEvent("ecall", "tracee"))
    assert effects[0][0] == "rejected"


def test_verified_lock_reengages_on_resume():
    world = tandem_world()
    world, _ = _attach(world)
    for kind, value in (("start", None), ("ecall", None)):
        world, _ = step(world, ProtocolEvent(kind, "tracee", value=value))
    world, _ = step(
        world,
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="accept"),
    )
    assert not world.get("tracee").shm_locked
    world, _ = step(world, ProtocolEvent("start", "tracee"))
    record = world.get("tracee")
    assert record.shm_locked
    assert record.verif_state is VerifState.GATHERING


def test_explore_depth_zero_is_initial_state_only():
    report = explore(tandem_world(), standard_tandem_alphabet(), depth=0)
    assert report.states == 1
    assert report.violations == []


def test_explore_honest_alphabet_depth_eight():
    honest = [
        ProtocolEvent("attach_as_tracer", "tracer", target="tracee", value="h-tracer"),
        ProtocolEvent("start", "tracee"),
        ProtocolEvent("ecall", "tracee"),
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="accept"),
    ]
    report = explore(tandem_world(), honest, depth=8)
    assert report.violations == []


def test_explore_adversarial_alphabet_depth_ten():
    report = explore(tandem_world(), standard_tandem_alphabet(), depth=10)
    assert report.successful_reads_outside_verified == 0
    assert report.violations == []


def test_context_switch_statistics():
    scenario = load_scenario(happy_path_scenario())
    _, log = run_scenario(World(), scenario)
    world_default, _ = run_scenario(World(), scenario)
    world_sm, _ = run_scenario(World(sm_mediated=True), scenario)
    assert world_default.context_switches == HOST_MEDIATED_SWITCHES
    assert world_sm.context_switches == SM_MEDIATED_SWITCHES


def test_bind_verdicts_fills_auto_events():
    from flowattest.protocol import bind_verdicts

    events = [
        ProtocolEvent("ecall", "tracee"),
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="auto"),
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="auto"),
        ProtocolEvent("set_cfa_verification_state", "tracer", target="tracee", value="auto"),
    ]
    bound = bind_verdicts(events, [True, False])
    assert [e.value for e in bound] == [None, "accept", "reject", "reject"]
    # After a rejection nothing is accepted again, even with verdicts left.
    bound = bind_verdicts(events, [False, True, True])
    assert [e.value for e in bound] == [None, "reject", "reject", "reject"]


def test_roles_round_trip():
    world = tandem_world()
    assert world.get("tracee").role is Role.TRACEE
    assert world.get("tracer").role is Role.TRACER
    assert world.get("tracer").expected_tracer_hash is None
