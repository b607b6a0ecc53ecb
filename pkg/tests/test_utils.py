from pathlib import Path

from honeyscope.config import DEFAULT_CONFIG
from honeyscope.auth.profiles import PROFILES_DIR
from honeyscope.utils import data_path


def test_source_checkout_data():
    assert DEFAULT_CONFIG.is_file()
    assert {'eucalyptus.json', 'manuka.json'} <= {path.name for path in PROFILES_DIR.glob('*.json')}


def test_installed_data_under_prefix(tmp_path):
    site = tmp_path / 'site-packages'
    site.mkdir()
    assert data_path('config', source_root=site, prefix=tmp_path) == tmp_path / 'share' / 'honeyscope' / 'config'


def test_setup_ships_data_files():
    setup = (Path(__file__).resolve().parent.parent / 'setup.py').read_text()
    assert "'share/honeyscope/config', ['config/default.ini']" in setup
    assert "glob('profiles/*.json')" in setup
