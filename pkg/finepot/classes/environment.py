'''
Module to load and validate environment variables for finepot runs.
Usage:
    1. Copy .env.template to .env
    2. Adjust output directory, seed, parallelism and archive settings in .env
    3. Construct FinepotEnvironment() before running scenarios
'''

import logging
import os

from dotenv import load_dotenv

from finepot.classes.errors import ConfigError

_LOGGER = logging.getLogger(__name__)

DEFAULTS = {
    'FINEPOT_OUT': './finepot_out',
    'FINEPOT_SEED': '0',
    'FINEPOT_JOBS': '1',
    'FINEPOT_ARCHIVE_URI': None,
    'FINEPOT_LOG_LEVEL': 'INFO',
}

LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL')


class FinepotEnvironment:

    def __init__(self, dotenv_path: str | None = None, load: bool = True):
        self.env_variables = self.load_environment_variables(dotenv_path, load)
        self.valid = self.validate_environment_variables()
        if not self.valid:
            raise ConfigError("Invalid finepot environment variables. Please check your .env file.")

    def load_environment_variables(self, dotenv_path: str | None = None, load: bool = True) -> dict:
        _LOGGER.debug("Loading finepot environment variables...")

        # .env never overrides variables already exported in the shell
        if load:
            load_dotenv(dotenv_path)

        env_variables = {}
        for name, default in DEFAULTS.items():
            value = os.getenv(name)
            env_variables[name] = value if value not in (None, '') else default

        return env_variables

    def validate_environment_variables(self) -> bool:
        """
        Validate that numeric variables parse and that the log level is known.

        Returns:
            bool: True if all variables are usable, False otherwise
        """
        if not self.env_variables:
            return False

        problems = []
        for name in ('FINEPOT_SEED', 'FINEPOT_JOBS'):
            try:
                int(self.env_variables[name])
            except (TypeError, ValueError):
                problems.append(f"{name} must be an integer, got {self.env_variables[name]!r}")
        if not problems and int(self.env_variables['FINEPOT_JOBS']) < 1:
            problems.append("FINEPOT_JOBS must be at least 1")
        if str(self.env_variables['FINEPOT_LOG_LEVEL']).upper() not in LOG_LEVELS:
            problems.append(f"FINEPOT_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")

        if problems:
            for problem in problems:
                _LOGGER.error(problem)
            return False

        return True

    def get_out_dir(self) -> str:
        """Get the default output directory."""
        return self.env_variables.get('FINEPOT_OUT')

    def get_seed(self) -> int:
        """Get the default run seed."""
        return int(self.env_variables.get('FINEPOT_SEED'))

    def get_jobs(self) -> int:
        """Get the default number of parallel task workers."""
        return int(self.env_variables.get('FINEPOT_JOBS'))

    def get_archive_uri(self) -> str | None:
        """Get the SQLAlchemy URL of the run archive, None when archiving is off."""
        return self.env_variables.get('FINEPOT_ARCHIVE_URI')

    def get_log_level(self) -> str:
        return str(self.env_variables.get('FINEPOT_LOG_LEVEL')).upper()
