from django.core.management.base import BaseCommand, CommandError

from experiments.checks import SUITES, TREND_SUITES, run_checks


class Command(BaseCommand):
    help = "Run the acceptance checks; exits non-zero when one fails"

    def add_arguments(self, parser):
        parser.add_argument('--suite', action='append', choices=sorted({**SUITES, **TREND_SUITES}),
                            help="repeatable; defaults to every quick suite")
        parser.add_argument('--trends', action='store_true', help="also run the 50-trial trend sweeps")
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        names = options['suite'] or list(SUITES)
        if options['trends']:
            names += [name for name in TREND_SUITES if name not in names]

        results = run_checks(names, seed=options['seed'])
        for result in results:
            style = self.style.SUCCESS if result.passed else self.style.ERROR
            status = 'ok' if result.passed else 'FAIL'
            self.stdout.write(style(f"{status:4} {result.name}: {result.detail} ({result.elapsed:.1f}s)"))
        failed = [r.name for r in results if not r.passed]
        if failed:
            raise CommandError(f"failed checks: {', '.join(failed)}")
        self.stdout.write(self.style.SUCCESS(f"{len(results)} checks passed"))
