import threading

from django.test import SimpleTestCase

from Site.logutils import log, reset_timer, run_label


class RunLabelTestCase(SimpleTestCase):

    def test_records_carry_the_label(self):
        with self.assertLogs("Attractors", "INFO") as cm:
            log.info("outside")
            with run_label("amplitude=5"):
                log.info("inside")
                with run_label("pair 2"):
                    log.info("nested")
                log.info("inside again")
            log.info("outside again")
        self.assertEqual([r.run for r in cm.records], ["-", "amplitude=5", "pair 2", "amplitude=5", "-"])

    def test_labels_are_per_thread(self):
        with self.assertLogs("Attractors", "INFO") as cm:
            with run_label("main"):
                worker = threading.Thread(target=log.info, args=("from the other thread",))
                worker.start()
                worker.join()
                log.info("from the main thread")
        self.assertEqual([r.run for r in cm.records], ["-", "main"])

    def test_newlines_and_timing(self):
        reset_timer()
        with self.assertLogs("Attractors", "INFO") as cm:
            log.info("\nStudy started\n\n")
        record = cm.records[0]
        self.assertEqual(record.msg, "Study started")
        self.assertEqual((record.prefix, record.postfix), ("\n", "\n\n"))
        self.assertGreaterEqual(record.relativeReference, 0.0)
