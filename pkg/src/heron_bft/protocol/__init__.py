"""Protocol state machines: queues, broadcast, agreement and the replica."""
