import io
import json
import os
import tempfile
import unittest
from datagear.gearctl import (
    EXIT_CONFIGURATION,
    EXIT_FAILURE,
    EXIT_OK,
    activation_link,
    main,
    render_rows
)
from datagear.ledger import PseudonymLedger
from datagear.simulator import REPORT_HEADER

CAMPAIGN_YAML = """\
name: Pilot
app: pilot-app
data_sources:
  - living-room-module
  - smart-meter-module
"""
SCENARIO_YAML = """\
seed: 3
start: 2024-10-21T00:00:00
horizon: 2h
households:
  - devices: [living-room-module]
    drift_ppm: 0
    sync_tolerance: 0
"""
IMPORT_CSV = (
    'account,source,property,unit,time_unix,value\r\n'
    'legacy-1,old-logger,power__W,W,1729468800,12\r\n'
    'legacy-1,old-logger,power__W,W,1729468860,13\r\n')


class TestHelpers(unittest.TestCase):

    def test_activation_link(self):
        self.assertEqual(
            'https://app.example.org/activate?token=a%2Fb%2Bc',
            activation_link('https://app.example.org/', 'a/b+c'))

    def test_render_rows(self):
        rows = [[1, 'Pilot']]
        self.assertEqual(
            'campaign_id,name\n1,Pilot\n',
            render_rows(rows, ['campaign_id', 'name'], 'csv'))
        table = render_rows(rows, ['campaign_id', 'name'], 'table')
        self.assertIn('campaign_id', table)
        self.assertIn('Pilot', table)


class TestGearctl(unittest.TestCase):

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.db = self.path('datagear.sqlite')
        self.ledger = self.path('ledger.csv')
        self.env = dict()

    def tearDown(self):
        self.tmpdir.cleanup()

    def path(self, name):
        return os.path.join(self.tmpdir.name, name)

    def write(self, name, text):
        with open(self.path(name), 'w', encoding='utf-8',
                  newline='') as handle:
            handle.write(text)
        return self.path(name)

    def gearctl(self, *argv, local=True):
        out = io.StringIO()
        err = io.StringIO()
        flags = ['--db', self.db] if local else []
        code = main(flags + ['--ledger', self.ledger] + list(argv),
                    self.env, out, err)
        return code, out.getvalue(), err.getvalue()

    def create_campaign(self):
        code, out, _ = self.gearctl(
            'campaign', 'create', self.write('campaign.yaml', CAMPAIGN_YAML))
        self.assertEqual(EXIT_OK, code)
        return out.strip()

    def test_campaign_create_and_list(self):
        self.assertEqual('1', self.create_campaign())
        code, out, _ = self.gearctl('--format', 'csv', 'campaign', 'list')
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(
            ['campaign_id,app_id,name,data_sources,overdue_multiplier',
             '1,1,Pilot,living-room-module smart-meter-module,'],
            out.splitlines())

    def test_campaign_file_needs_sources(self):
        code, _, err = self.gearctl(
            'campaign', 'create', self.write('bad.yaml', 'name: Pilot\n'))
        self.assertEqual(EXIT_CONFIGURATION, code)
        self.assertIn('needs a name and a data_sources list', err)

    def test_account_create_records_pseudonym(self):
        campaign = self.create_campaign()
        code, out, _ = self.gearctl(
            'account', 'create', '--campaign', campaign,
            '--pseudonym', 'hh-001', '--note', 'Jansen')
        self.assertEqual(EXIT_OK, code)
        self.assertTrue(out.startswith(
            'https://app.example.org/activate?token='))
        entry = PseudonymLedger(self.ledger).find('hh-001')
        self.assertEqual('Jansen', entry.note)
        self.assertNotIn(out.strip().split('=')[-1],
                         open(self.ledger, encoding='utf-8').read())

        code, out, _ = self.gearctl(
            '--format', 'csv', 'account', 'list', '--campaign', campaign)
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(
            f'hh-001,{entry.account_id},pending,', out.splitlines()[1])

    def test_duplicate_pseudonym_creates_no_account(self):
        campaign = self.create_campaign()
        self.gearctl('account', 'create', '--campaign', campaign,
                     '--pseudonym', 'hh-001')
        code, _, err = self.gearctl(
            'account', 'create', '--campaign', campaign,
            '--pseudonym', 'hh-001')
        self.assertEqual(EXIT_FAILURE, code)
        self.assertIn('duplicate_pseudonym', err)
        _, out, _ = self.gearctl(
            '--format', 'csv', 'account', 'list', '--campaign', campaign)
        self.assertEqual(2, len(out.splitlines()))

    def test_monitor_lists_pending_accounts(self):
        campaign = self.create_campaign()
        self.gearctl('account', 'create', '--campaign', campaign,
                     '--pseudonym', 'hh-001')
        code, out, _ = self.gearctl('monitor', '--campaign', campaign)
        self.assertEqual(EXIT_OK, code)
        self.assertIn('overdue: 0', out)
        self.assertIn('not activated: 1 (hh-001)', out)
        self.assertIn('unanswered queries: 0', out)
        code, out, err = self.gearctl(
            '--format', 'csv', 'monitor', '--campaign', campaign,
            '--at', '2024-10-21T12:00:00')
        self.assertEqual(EXIT_OK, code)
        self.assertEqual(
            'pseudonym,account_id,source,device_name,latest,'
            'next_expected,overdue,heartbeat', out.strip())
        self.assertIn('not activated: 1', err)

    def test_import_then_export(self):
        campaign = self.create_campaign()
        code, out, _ = self.gearctl(
            'import', self.write('legacy.csv', IMPORT_CSV),
            '--campaign', campaign)
        self.assertEqual(EXIT_OK, code)
        self.assertEqual('stored 2 duplicates 0\n', out)
        target = self.path('export.csv')
        code, _, _ = self.gearctl(
            'export', '--campaign', campaign, '--from', '1729468800',
            '--to', '1729468860', '--out', target)
        self.assertEqual(EXIT_OK, code)
        with open(target, newline='', encoding='utf-8') as handle:
            lines = handle.read().splitlines()
        self.assertEqual(
            ['account,source,property,unit,time_unix,value',
             'legacy-1,old-logger,power__W,W,1729468800,12'], lines)

    def test_import_reports_line(self):
        campaign = self.create_campaign()
        code, _, err = self.gearctl(
            'import', self.write('bad.csv', IMPORT_CSV + 'x,y\r\n'),
            '--campaign', campaign)
        self.assertEqual(EXIT_FAILURE, code)
        self.assertIn('line 4', err)

    def test_unknown_campaign(self):
        code, _, err = self.gearctl('export', '--campaign', '99')
        self.assertEqual(EXIT_FAILURE, code)
        self.assertTrue(err.startswith('gearctl: not_found: '))

    def test_remote_needs_admin_token(self):
        code, _, err = self.gearctl('campaign', 'list', local=False)
        self.assertEqual(EXIT_CONFIGURATION, code)
        self.assertIn('admin token expected', err)

    def test_bad_server_url(self):
        self.env['DATAGEAR_SERVER_URL'] = 'bananas'
        code, _, err = self.gearctl('campaign', 'list', local=False)
        self.assertEqual(EXIT_CONFIGURATION, code)
        self.assertIn("'DATAGEAR_SERVER_URL' expected to contain valid url",
                      err)

    def test_simulate_in_memory(self):
        report = self.path('report.json')
        events = self.path('events.log')
        code, out, _ = self.gearctl(
            'simulate', self.write('scenario.yaml', SCENARIO_YAML),
            '--report', report, '--events', events, local=False)
        self.assertEqual(EXIT_OK, code)
        self.assertIn('living-room-module', out)
        self.assertIn('overdue at end: 0', out)
        with open(report, encoding='utf-8') as handle:
            body = json.load(handle)
        self.assertTrue(body['conserved'])
        self.assertEqual(3, body['seed'])
        device = body['devices'][0]
        self.assertEqual(72, device['generated'])
        self.assertEqual(72, device['stored'])
        with open(events, encoding='utf-8') as handle:
            self.assertIn('hh-001 provisioned 1 devices', handle.read())
        entry = PseudonymLedger(self.ledger).find('hh-001')
        self.assertEqual('simulated', entry.note)

    def test_simulate_csv_with_seed(self):
        code, out, _ = self.gearctl(
            '--format', 'csv', 'simulate',
            self.write('scenario.yaml', SCENARIO_YAML), '--seed', '11',
            local=False)
        self.assertEqual(EXIT_OK, code)
        lines = out.splitlines()
        self.assertEqual(','.join(REPORT_HEADER), lines[0])
        self.assertEqual(2, len(lines))

    def test_simulate_bad_scenario(self):
        code, _, err = self.gearctl(
            'simulate', self.write('scenario.yaml', 'households: []\n'),
            local=False)
        self.assertEqual(EXIT_CONFIGURATION, code)
        self.assertIn('households', err)


if __name__ == '__main__':
    unittest.main()
