from logs.models import LogSource

from .models import FailureKind

# (source, severity, text) per failure kind, oldest line first.
FAILURE_LOG_TEMPLATES = {
    FailureKind.CRASH: (
        (LogSource.SYS, 'WARN', 'kernel: memory exhausted on {node}, oom-killer invoked'),
        (LogSource.SYS, 'ERROR', 'kernel: worker process on {node} aborted with signal 6'),
        (LogSource.SYS, 'FATAL', 'systemd: {node} crashed and entered failed state'),
    ),
    FailureKind.NETWORK_PARTITION: (
        (LogSource.NET, 'WARN', 'net: link to {node} lost carrier, packets dropped'),
        (LogSource.NET, 'ERROR', 'rpc: connection to {node} timed out after 30s'),
        (LogSource.NET, 'FATAL', 'cluster: {node} unreachable, marked partitioned'),
    ),
    FailureKind.DISK_FULL: (
        (LogSource.SYS, 'WARN', 'fs: /var on {node}: no space left on device'),
        (LogSource.SYS, 'ERROR', 'db: write failed on {node}: could not extend file'),
        (LogSource.SYS, 'FATAL', 'svc: storage on {node} switched to read-only mode'),
    ),
    FailureKind.AUTH_STORM: (
        (LogSource.CUSTOM, 'WARN', 'sshd: authentication failure for admin from 10.0.0.7 on {node}'),
        (LogSource.CUSTOM, 'ERROR', 'sshd: too many authentication failures for admin on {node}'),
        (LogSource.CUSTOM, 'ERROR', 'sshd: Connection closed by 10.0.0.7 port 22 [preauth] on {node}'),
    ),
}
