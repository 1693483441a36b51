from django.conf import settings
from django.test.runner import DiscoverRunner


class LocalAppsDiscoverRunner(DiscoverRunner):
    """Discover tests in the local apps when no labels are given.

    The apps live on ``sys.path`` as top-level packages, so default
    discovery from the project root would not find them.
    """

    def build_suite(self, test_labels=None, *args, **kwargs):
        if not test_labels:
            test_labels = list(settings.LOCAL_APPS)
        return super().build_suite(test_labels, *args, **kwargs)
