from app.identity.models import ResourceId
from app.provisioning.retry_queue import ActionStatus, ActionVerb, ResourceAction, RetryQueue


def action(person_id, resource=ResourceId.UNIX_HOSTS, verb=ActionVerb.SUSPEND_ACCOUNT):
    return ResourceAction(resource, verb, person_id)


def test_fifo_per_resource():
    queue = RetryQueue()
    queue.enqueue(action("a"))
    queue.enqueue(action("b", ResourceId.DIRECTORY_MAIL))
    queue.enqueue(action("c"))
    assert queue.peek(ResourceId.UNIX_HOSTS).person_id == "a"
    assert queue.pop(ResourceId.UNIX_HOSTS).person_id == "a"
    assert queue.peek(ResourceId.UNIX_HOSTS).person_id == "c"
    assert [a.person_id for a in queue.pending()] == ["b", "c"]
    assert len(queue) == 2


def test_has_pending_is_per_person_and_resource():
    queue = RetryQueue()
    queue.enqueue(action("a"))
    assert queue.has_pending("a", ResourceId.UNIX_HOSTS)
    assert not queue.has_pending("a", ResourceId.ACCESS_REGISTRY)
    assert not queue.has_pending("b", ResourceId.UNIX_HOSTS)


def test_manual_intervention_is_kept_apart():
    queue = RetryQueue()
    flagged = action("a")
    queue.flag_manual_intervention(flagged)
    assert len(queue) == 0
    assert queue.manual_intervention() == [flagged]
    assert flagged.status is ActionStatus.MANUAL_INTERVENTION


def test_snapshot_round_trip():
    queue = RetryQueue()
    queued = ResourceAction(ResourceId.LEARNING_PLATFORM, ActionVerb.CREATE_ACCOUNT, "f1",
                            attributes={"uid": "f1"}, attempt=2, cause="learning_platform: resource down")
    queue.enqueue(queued)
    queue.flag_manual_intervention(action("z"))
    restored = RetryQueue.from_dict(queue.to_dict())
    assert restored.pending() == [queued]
    assert restored.to_dict() == queue.to_dict()
