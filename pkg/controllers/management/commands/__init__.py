# pipeline commands: one module per manage.py subcommand
