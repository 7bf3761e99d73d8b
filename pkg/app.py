"""
ASL: toolkit de localização temporal de acções (CLI)
=====================================================
Corre com:  python app.py <comando> [opções]
            asl <comando> [opções]          (depois de `pip install -e .`)

Exit codes: 0 sucesso, 1 uso/configuração, 2 dados, 3 falha numérica.
"""

import os
import sys

import click

sys.path.insert(0, os.path.dirname(__file__))
import config as cfg  # noqa: E402
from core.commands import ALL_COMMANDS  # noqa: E402
from core.errors import ASLError  # noqa: E402

EXIT_USAGE = 1


class ASLGroup(click.Group):
    """Grupo que traduz excepções em exit codes estáveis."""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            return super().main(
                args=args,
                prog_name=prog_name,
                complete_var=complete_var,
                standalone_mode=False,
                **extra,
            )
        except click.ClickException as exc:
            exc.show()
            sys.exit(EXIT_USAGE)
        except click.Abort:
            click.echo("Abortado.", err=True)
            sys.exit(EXIT_USAGE)
        except ASLError as exc:
            click.echo(f"Erro: {exc}", err=True)
            sys.exit(exc.exit_code)


@click.group(cls=ASLGroup)
def cli() -> None:
    """Detector temporal de ações: treino, inferência e avaliação em features sintéticas."""
    cfg.configure_logging()
    cfg.configure_sentry()


for _command in ALL_COMMANDS:
    cli.add_command(_command)


def main() -> None:
    cli(prog_name="asl")


if __name__ == "__main__":
    main()
