"""
hazardset command-line application.
Extremal-PCA hazard event-set generator: fit, select-m, generate, diagnose and simulate-synthetic.
"""

import logging
import os
import sys

import click

from config import get_config
from errors import HazardSetError

logger = logging.getLogger(__name__)


class HazardCli(click.Group):
    """click group that maps registered exception types to exit codes."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.error_handlers = {}

    def errorhandler(self, exc_type):
        def decorator(handler):
            self.error_handlers[exc_type] = handler
            return handler
        return decorator

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except tuple(self.error_handlers) as e:
            handler = next(self.error_handlers[cls] for cls in type(e).__mro__
                           if cls in self.error_handlers)
            ctx.exit(handler(e))


def create_app(config_name=None) -> HazardCli:
    """Application factory: builds the CLI for the named environment."""
    default_config = get_config(config_name)

    @click.group(cls=HazardCli, help=__doc__)
    @click.option('--env', 'env_name', default=None,
                  help='configuration environment (development, testing, production)')
    @click.pass_context
    def app(ctx, env_name):
        cfg = get_config(env_name) if env_name else default_config
        cfg.init_app(app)
        ctx.obj = {'config': cfg}

    from commands import all_commands
    for command in all_commands:
        app.add_command(command)

    # Error handlers
    register_error_handlers(app)
    return app


def register_error_handlers(app: HazardCli):
    """Register error handlers for the application."""

    @app.errorhandler(HazardSetError)
    def handle_hazard_error(error):
        ctx = click.get_current_context(silent=True)
        cfg = (ctx.find_root().obj or {}).get('config') if ctx is not None else None
        if cfg is not None and cfg.DEBUG:
            logger.debug(f"{type(error).__name__} traceback", exc_info=error)
        click.echo(f"Error: {error}", err=True)
        return error.exit_code


# Create the application instance
cli = create_app(os.getenv('HAZARD_CONFIG'))


def main():
    cli(prog_name='hazardset')


if __name__ == '__main__':
    sys.exit(main())
