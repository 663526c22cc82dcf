from .pipeline import gramian_command, stabilize_command, sweep_command
from .verify import verify_command


def register_commands(cli):
    """Register all commands with the gramstab group."""
    for command in (gramian_command, stabilize_command, verify_command, sweep_command):
        cli.add_command(command)


__all__ = [
    "gramian_command",
    "stabilize_command",
    "sweep_command",
    "verify_command",
    "register_commands",
]
